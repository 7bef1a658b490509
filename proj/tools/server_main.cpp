#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "aegis/cli.hpp"
#include "aegis/error.hpp"
#include "aegis/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cracking Aegis game server", "aegis-server"};

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "data";
  std::string scripts_dir = "scripts";
  std::string static_dir = "webui/dist";
  std::string provider = "live";
  std::string config_file;
  std::string endpoint;
  std::string model;
  std::string api_key_env;
  double ttl_hours = 24;

  app.add_option("--host", host, "Bind address")->envname("AEGIS_HOST");
  app.add_option("--port", port, "Bind port")->envname("AEGIS_PORT");
  app.add_option("--data-dir", data_dir, "Transcript directory")->envname("AEGIS_DATA_DIR");
  app.add_option("--scripts-dir", scripts_dir, "Directory of <script_id>.script files")->envname("AEGIS_SCRIPTS_DIR");
  app.add_option("--static-dir", static_dir, "Web client files served at /")->envname("AEGIS_STATIC_DIR");
  app.add_option("--provider", provider, "live or mock:<queue file>")->envname("AEGIS_PROVIDER");
  app.add_option("--config", config_file, "Provider config (JSON)");
  app.add_option("--endpoint", endpoint, "Chat completions URL")->envname("AEGIS_ENDPOINT");
  app.add_option("--model", model, "Model name")->envname("AEGIS_MODEL");
  app.add_option("--api-key-env", api_key_env, "Environment variable holding the API key")->envname("AEGIS_API_KEY_ENV");
  app.add_option("--ttl-hours", ttl_hours, "Idle session eviction");
  CLI11_PARSE(app, argc, argv);

  try {
    aegis::ServiceConfig config;
    config.scripts_dir = scripts_dir;
    config.data_dir = data_dir;
    config.static_dir = static_dir;
    config.idle_ttl = std::chrono::seconds(static_cast<long>(ttl_hours * 3600));

    if (!config_file.empty()) {
      std::ifstream in(config_file);
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw aegis::ConfigError("config " + config_file + " is not a JSON object");
      config.session.provider = aegis::provider_config_from_json(j.contains("provider") ? j["provider"] : j);
    }
    if (!endpoint.empty()) config.session.provider.endpoint_url = endpoint;
    if (!model.empty()) config.session.provider.model_name = model;
    if (!api_key_env.empty()) config.session.provider.api_key_env = api_key_env;

    if (provider != "live") {
      aegis::make_provider(provider);  // fail fast on a bad spec
      config.provider_factory = [provider](const std::string&) { return aegis::make_provider(provider); };
    }

    aegis::GameService service(std::move(config));
    std::cerr << "listening on " << host << ":" << port << "\n";
    return service.listen(host, port) ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
