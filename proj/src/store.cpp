#include "aegis/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aegis/digest.hpp"
#include "aegis/error.hpp"

namespace aegis {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::PlayerInput, "PlayerInput"},     {EventKind::RawModelReply, "RawModelReply"},
    {EventKind::ParsedTurn, "ParsedTurn"},       {EventKind::ClueDelivered, "ClueDelivered"},
    {EventKind::SceneAdvanced, "SceneAdvanced"}, {EventKind::DecisionMade, "DecisionMade"},
    {EventKind::EndingChosen, "EndingChosen"},   {EventKind::Clamped, "Clamped"},
    {EventKind::Error, "Error"},
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw StorageError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot rename " + tmp.string() + ": " + ec.message());
}

void append_durably(const fs::path& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (f == nullptr) throw StorageError("cannot open " + path.string() + " for append");
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                  ::fsync(fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw StorageError("append to " + path.string() + " failed");
}

json meta_json(const SessionRecord& r) {
  return {{"session_id", r.session_id},
          {"script_hash", r.script_hash},
          {"prompt_version", std::string(to_string(r.prompt_version))},
          {"final_state", r.final_state ? json(*r.final_state) : json(nullptr)}};
}

void apply_meta(SessionRecord& r, const json& meta) {
  r.session_id = meta.value("session_id", r.session_id);
  r.script_hash = meta.value("script_hash", r.script_hash);
  if (auto v = parse_prompt_version(meta.value("prompt_version", "V3"))) r.prompt_version = *v;
  if (auto it = meta.find("final_state"); it != meta.end() && it->is_string()) r.final_state = it->get<std::string>();
}

/// Parses a log file, dropping an unterminated trailing line left by an
/// interrupted append.
std::vector<TranscriptEvent> read_log(const fs::path& path, bool truncate_partial) {
  std::string text = read_file(path);
  if (!text.empty() && text.back() != '\n') {
    const auto last_nl = text.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    text.resize(keep);
    if (truncate_partial) fs::resize_file(path, keep);
  }
  return import_events(text);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "?";
}

EventKind parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kEventNames) {
    if (name == text) return k;
  }
  throw StorageError("unknown event kind '" + std::string(text) + "'");
}

TranscriptEvent make_event(EventKind kind, json payload) {
  TranscriptEvent ev;
  ev.kind = kind;
  ev.payload = std::move(payload);
  return ev;
}

std::string event_to_line(const TranscriptEvent& event) {
  json j = {{"seq", event.seq}, {"ts", event.ts}, {"kind", std::string(to_string(event.kind))}, {"payload", event.payload}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

TranscriptEvent event_from_line(std::string_view line) {
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw StorageError("transcript line is not a JSON object");
  try {
    TranscriptEvent ev;
    ev.seq = j.at("seq").get<std::int64_t>();
    ev.ts = j.at("ts").get<std::string>();
    ev.kind = parse_event_kind(j.at("kind").get<std::string>());
    ev.payload = j.at("payload");
    return ev;
  } catch (const json::exception& e) {
    throw StorageError(std::string("malformed transcript line: ") + e.what());
  }
}

std::vector<TranscriptEvent> import_events(std::string_view stream) {
  std::vector<TranscriptEvent> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    auto nl = stream.find('\n', pos);
    if (nl == std::string_view::npos) nl = stream.size();
    const auto line = stream.substr(pos, nl - pos);
    if (!line.empty()) out.push_back(event_from_line(line));
    pos = nl + 1;
  }
  return out;
}

std::string export_events(const std::vector<TranscriptEvent>& events) {
  std::vector<const TranscriptEvent*> ordered;
  for (const auto& e : events) ordered.push_back(&e);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
  std::string out;
  for (const auto* e : ordered) out += event_to_line(*e) + "\n";
  return out;
}

// ---- SessionStore ----------------------------------------------------------

SessionStore::SessionStore() = default;

SessionStore::SessionStore(fs::path data_dir) : dir_(std::move(data_dir) / "sessions") {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw StorageError("cannot create " + dir_.string() + ": " + ec.message());
}

fs::path SessionStore::log_path(const std::string& id) const { return dir_ / (id + ".log"); }
fs::path SessionStore::meta_path(const std::string& id) const { return dir_ / (id + ".meta"); }

SessionStore::Entry& SessionStore::entry(const std::string& id) {
  auto it = sessions_.find(id);
  if (it != sessions_.end()) return it->second;
  if (!persistent() || !fs::exists(log_path(id))) throw UnknownSession(id);

  Entry e;
  e.record.session_id = id;
  if (fs::exists(meta_path(id))) {
    const json meta = json::parse(read_file(meta_path(id)), nullptr, false);
    if (!meta.is_discarded() && meta.is_object()) apply_meta(e.record, meta);
  }
  e.record.events = read_log(log_path(id), true);
  e.loaded = true;
  return sessions_.emplace(id, std::move(e)).first->second;
}

void SessionStore::write_meta(const Entry& e) const {
  if (!persistent()) return;
  write_file_atomic(meta_path(e.record.session_id), meta_json(e.record).dump(2) + "\n");
}

void SessionStore::create(const std::string& id, const std::string& script_hash, PromptVersion version) {
  std::lock_guard lock(mutex_);
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos) throw StorageError("invalid session id '" + id + "'");
  if (sessions_.count(id) != 0 || (persistent() && fs::exists(log_path(id)))) {
    throw StorageError("session " + id + " already exists");
  }
  Entry e;
  e.record.session_id = id;
  e.record.script_hash = script_hash;
  e.record.prompt_version = version;
  if (persistent()) {
    append_durably(log_path(id), "");
    write_meta(e);
  }
  sessions_.emplace(id, std::move(e));
}

bool SessionStore::exists(const std::string& id) {
  std::lock_guard lock(mutex_);
  return sessions_.count(id) != 0 || (persistent() && fs::exists(log_path(id)));
}

std::int64_t SessionStore::append_event(const std::string& id, TranscriptEvent event) {
  std::vector<TranscriptEvent> one;
  one.push_back(std::move(event));
  return append_events(id, std::move(one)).front();
}

std::vector<std::int64_t> SessionStore::append_events(const std::string& id, std::vector<TranscriptEvent> events) {
  std::lock_guard lock(mutex_);
  Entry& e = entry(id);
  std::int64_t next = e.record.events.empty() ? 1 : e.record.events.back().seq + 1;

  std::vector<std::int64_t> seqs;
  std::string lines;
  for (auto& ev : events) {
    ev.seq = next++;
    if (ev.ts.empty()) ev.ts = utc_now_iso8601();
    lines += event_to_line(ev) + "\n";
    seqs.push_back(ev.seq);
  }
  if (persistent()) append_durably(log_path(id), lines);
  for (auto& ev : events) e.record.events.push_back(std::move(ev));
  return seqs;
}

void SessionStore::set_final_state(const std::string& id, const std::string& serialized_state) {
  std::lock_guard lock(mutex_);
  Entry& e = entry(id);
  e.record.final_state = serialized_state;
  write_meta(e);
}

std::vector<TranscriptEvent> SessionStore::events(const std::string& id) {
  std::lock_guard lock(mutex_);
  return entry(id).record.events;
}

SessionRecord SessionStore::record(const std::string& id) {
  std::lock_guard lock(mutex_);
  return entry(id).record;
}

std::string SessionStore::export_session(const std::string& id) {
  std::lock_guard lock(mutex_);
  return export_events(entry(id).record.events);
}

std::vector<std::string> SessionStore::list_sessions() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  if (persistent()) {
    for (const auto& f : fs::directory_iterator(dir_)) {
      if (f.path().extension() == ".log") ids.push_back(f.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

SessionRecord load_record(const fs::path& path) {
  if (!fs::exists(path)) throw StorageError("no such log " + path.string());
  SessionRecord r;
  r.session_id = path.stem().string();
  fs::path meta = path;
  meta.replace_extension(".meta");
  if (fs::exists(meta)) {
    const json j = json::parse(read_file(meta), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw StorageError("malformed metadata " + meta.string());
    apply_meta(r, j);
  }
  r.events = read_log(path, false);
  return r;
}

std::vector<SessionRecord> load_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw StorageError("not a directory: " + dir.string());
  std::vector<fs::path> logs;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.is_regular_file() && f.path().extension() == ".log") logs.push_back(f.path());
  }
  std::sort(logs.begin(), logs.end());
  std::vector<SessionRecord> out;
  for (const auto& p : logs) out.push_back(load_record(p));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.session_id < b.session_id; });
  return out;
}

}  // namespace aegis
