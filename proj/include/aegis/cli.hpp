#pragma once

// Operator tooling behind the aegis-cli binary.
//
//   validate       --script FILE
//   export-prompt  --script FILE --version V1|V2|V3 [--out FILE]
//   play           --script FILE --version V --provider live|mock:QUEUE [--data-dir DIR]
//   replay         LOG [--script FILE]
//   analyze        LOG_DIR [--codebook FILE] [--out DIR]
//
// Exit codes: 0 ok, 1 validation or analysis findings, 2 runtime error.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "aegis/provider.hpp"

namespace aegis {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitRuntime = 2;

/// "live" or "mock:<queue file>". Throws ConfigError for anything else.
std::shared_ptr<ChatProvider> make_provider(const std::string& spec);

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace aegis
