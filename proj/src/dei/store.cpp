#include "sloop/dei/store.hpp"

#include <unistd.h>

#include <cstring>
#include <fstream>

#include "sloop/checksum.hpp"
#include "sloop/error.hpp"
#include "sloop/image_io.hpp"
#include "sloop/log.hpp"

namespace sloop::dei {

const char* to_string(LogOp op) {
  switch (op) {
    case LogOp::upsert: return "upsert";
    case LogOp::transition: return "transition";
    case LogOp::score_write: return "score-write";
    case LogOp::task_write: return "task-write";
    case LogOp::merge: return "merge";
  }
  return "?";
}

LogOp log_op_from_string(const std::string& s) {
  for (LogOp op : {LogOp::upsert, LogOp::transition, LogOp::score_write, LogOp::task_write, LogOp::merge}) {
    if (s == to_string(op)) return op;
  }
  throw validation_error("unknown log operation '" + s + "'");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::string frame_body(const LogEntry& e) {
  return nlohmann::json{{"seq", e.seq}, {"op", to_string(e.op)}, {"payload", e.payload}}.dump();
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const LogEntry& entry) {
  const std::string body = frame_body(entry);
  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 8);
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  put_u32(out, crc32(body));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

TransactionLog::~TransactionLog() { close(); }

void TransactionLog::open(const std::filesystem::path& path, bool sync) {
  close();
  path_ = path;
  sync_ = sync;
  file_ = std::fopen(path.c_str(), "ab");
  if (!file_) throw Error(ErrorCode::io, "cannot open transaction log " + path.string());
}

void TransactionLog::close() {
  if (file_) {
    std::fclose(file_);
    file_ = nullptr;
  }
}

void TransactionLog::arm_crash(std::uint64_t seq, double fraction) { crash_ = std::pair(seq, fraction); }

void TransactionLog::append(const LogEntry& entry) {
  if (!file_) throw Error(ErrorCode::internal, "transaction log is not open");
  const auto frame = encode_frame(entry);
  std::size_t n = frame.size();
  const bool crash = crash_ && crash_->first == entry.seq;
  if (crash) n = static_cast<std::size_t>(static_cast<double>(frame.size()) * crash_->second);
  if (std::fwrite(frame.data(), 1, n, file_) != n) throw Error(ErrorCode::io, "short write to transaction log");
  if (std::fflush(file_) != 0) throw Error(ErrorCode::io, "cannot flush transaction log");
  if (sync_ && ::fsync(::fileno(file_)) != 0) throw Error(ErrorCode::io, "fsync failed on transaction log");
  if (crash) {
    crash_.reset();
    close();
    throw InjectedCrash();
  }
}

void TransactionLog::truncate() {
  close();
  std::FILE* f = std::fopen(path_.c_str(), "wb");
  if (!f) throw Error(ErrorCode::io, "cannot truncate transaction log " + path_.string());
  std::fclose(f);
  open(path_, sync_);
}

TransactionLog::ReadResult TransactionLog::read(const std::filesystem::path& path) {
  ReadResult out;
  if (!std::filesystem::exists(path)) return out;
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  std::uint64_t last_seq = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 8) {
      out.torn = true;
      break;
    }
    const std::uint32_t len = get_u32(&bytes[pos]);
    const std::uint32_t crc = get_u32(&bytes[pos + 4]);
    if (bytes.size() - pos - 8 < len) {
      out.torn = true;
      break;
    }
    const std::string_view body(reinterpret_cast<const char*>(&bytes[pos + 8]), len);
    if (crc32(body) != crc) {
      out.torn = true;
      break;
    }
    LogEntry e;
    try {
      const auto j = nlohmann::json::parse(body);
      e.seq = j.at("seq").get<std::uint64_t>();
      e.op = log_op_from_string(j.at("op").get<std::string>());
      e.payload = j.at("payload");
    } catch (const std::exception&) {
      out.torn = true;
      break;
    }
    if (e.seq <= last_seq) {
      out.torn = true;
      break;
    }
    e.checksum = crc;
    last_seq = e.seq;
    out.entries.push_back(std::move(e));
    pos += 8 + len;
    out.valid_bytes = pos;
  }
  return out;
}

void StoreState::apply(const LogEntry& e) {
  const auto& p = e.payload;
  switch (e.op) {
    case LogOp::upsert: {
      const auto kind = p.at("kind").get<std::string>();
      if (kind == "image") {
        auto r = image_from_json(p.at("record"));
        images[r.image_id] = r;
        image_counter = std::max(image_counter, p.value("counter", image_counter));
      } else if (kind == "weights") {
        weights[p.at("workflow").get<std::string>()] = weights_from_json(p.at("weights"));
      } else if (kind == "doc") {
        docs[p.at("name").get<std::string>()] = p.at("value");
      } else {
        throw validation_error("log: unknown upsert kind " + kind);
      }
      break;
    }
    case LogOp::transition: {
      auto& r = images.at(p.at("image_id").get<std::string>());
      r.state = p.at("to").get<std::string>();
      r.history.push_back({r.state, p.at("timestamp_ms").get<std::int64_t>(), p.at("actor").get<std::string>()});
      if (p.contains("fiducials")) r.fiducials = fiducials_from_json(p.at("fiducials"));
      if (p.contains("artifacts")) r.artifacts.update(p.at("artifacts"));
      break;
    }
    case LogOp::score_write: {
      StoredRanking s;
      s.list = ranked_list_from_json(p.at("ranking"));
      s.debug = p.value("debug", nlohmann::json::object());
      rankings[s.list.query_id] = std::move(s);
      break;
    }
    case LogOp::task_write: {
      const auto cmd = p.at("cmd").get<std::string>();
      if (cmd == "add_annotator") {
        tasks.add_annotator(p.at("annotator").get<std::string>());
      } else if (cmd == "add_gold") {
        tasks.add_gold(make_pair_key(p.at("pair").at(0).get<std::string>(), p.at("pair").at(1).get<std::string>()),
                       label_from_string(p.at("truth").get<std::string>()));
      } else if (cmd == "add_task") {
        tasks.add_task(make_pair_key(p.at("pair").at(0).get<std::string>(), p.at("pair").at(1).get<std::string>()),
                       p.value("iteration", 0));
      } else if (cmd == "fetch") {
        tasks.fetch(p.at("annotator").get<std::string>(), p.at("max").get<std::size_t>());
      } else if (cmd == "respond") {
        tasks.respond(p.at("annotator").get<std::string>(), p.at("task_id").get<std::string>(),
                      label_from_string(p.at("label").get<std::string>()), p.value("timestamp_ms", std::int64_t{0}));
      } else if (cmd == "expire") {
        tasks.expire(p.at("task_id").get<std::string>());
      } else {
        throw validation_error("log: unknown task command " + cmd);
      }
      break;
    }
    case LogOp::merge:
      cohorts = partition_from_json(p.at("partition"));
      break;
  }
  last_seq = e.seq;
}

nlohmann::json StoreState::to_json() const {
  nlohmann::json imgs = nlohmann::json::array();
  for (const auto& [id, r] : images) imgs.push_back(dei::to_json(r));
  nlohmann::json ranks = nlohmann::json::array();
  for (const auto& [id, r] : rankings) ranks.push_back({{"ranking", dei::to_json(r.list)}, {"debug", r.debug}});
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [name, ew] : weights) w[name] = sloop::to_json(ew);
  return {{"last_seq", last_seq}, {"images", imgs},       {"rankings", ranks},
          {"tasks", tasks.to_json()}, {"cohorts", sloop::to_json(cohorts)}, {"weights", w},
          {"docs", docs},             {"image_counter", image_counter}};
}

StoreState StoreState::from_json(const nlohmann::json& j) {
  StoreState s;
  s.last_seq = j.at("last_seq").get<std::uint64_t>();
  for (const auto& r : j.at("images")) {
    auto rec = image_from_json(r);
    s.images[rec.image_id] = rec;
  }
  for (const auto& r : j.at("rankings")) {
    StoredRanking sr;
    sr.list = ranked_list_from_json(r.at("ranking"));
    sr.debug = r.value("debug", nlohmann::json::object());
    s.rankings[sr.list.query_id] = sr;
  }
  s.tasks = TaskBoard::from_json(j.at("tasks"));
  s.cohorts = partition_from_json(j.at("cohorts"));
  for (const auto& [name, w] : j.at("weights").items()) s.weights[name] = weights_from_json(w);
  for (const auto& [name, v] : j.at("docs").items()) s.docs[name] = v;
  s.image_counter = j.value("image_counter", std::uint64_t{0});
  return s;
}

Store::Store(Options options) : options_(std::move(options)) {
  state_.tasks = TaskBoard(options_.feedback);
  const auto& dir = options_.data_dir;
  std::filesystem::create_directories(dir / "blobs");
  const auto snap = dir / "snapshot.json";
  if (std::filesystem::exists(snap)) {
    const auto bytes = read_file(snap);
    state_ = StoreState::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  }
  const auto log_path = dir / "transactions.log";
  auto read = TransactionLog::read(log_path);
  for (const auto& e : read.entries) {
    if (e.seq <= state_.last_seq) continue;
    state_.apply(e);
    ++replayed_;
  }
  torn_ = read.torn;
  if (read.torn) {
    log_warn("transaction log has a torn tail; keeping the first " + std::to_string(read.entries.size()) +
             " entries");
    std::filesystem::resize_file(log_path, read.valid_bytes);
  }
  log_.open(log_path, options_.sync);
}

std::uint64_t Store::commit(LogOp op, nlohmann::json payload) {
  LogEntry e;
  e.seq = state_.last_seq + 1;
  e.op = op;
  e.payload = std::move(payload);
  if (op == LogOp::task_write) {
    // Apply to a copy first so a rejected command never reaches the log.
    StoreState scratch;
    scratch.tasks = state_.tasks;
    scratch.apply(e);
    log_.append(e);
    state_.tasks = std::move(scratch.tasks);
    state_.last_seq = e.seq;
    return e.seq;
  }
  log_.append(e);
  state_.apply(e);
  return e.seq;
}

void Store::snapshot() {
  const auto dir = options_.data_dir;
  const std::string text = state_.to_json().dump();
  const auto tmp = dir / "snapshot.json.tmp";
  write_file(tmp, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  std::filesystem::rename(tmp, dir / "snapshot.json");
  log_.truncate();
}

std::filesystem::path Store::blob_path(const std::string& ref) const {
  if (ref.size() != 64 || ref.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw validation_error("malformed blob reference '" + ref + "'");
  }
  return options_.data_dir / "blobs" / ref;
}

std::string Store::put_blob(std::span<const std::uint8_t> bytes) {
  const auto ref = sha256_hex(bytes);
  const auto path = blob_path(ref);
  if (!std::filesystem::exists(path)) {
    const auto tmp = path.string() + ".tmp";
    write_file(tmp, bytes);
    std::filesystem::rename(tmp, path);
  }
  return ref;
}

std::vector<std::uint8_t> Store::get_blob(const std::string& ref) const {
  const auto path = blob_path(ref);
  if (!std::filesystem::exists(path)) throw not_found("no blob " + ref);
  return read_file(path);
}

bool Store::has_blob(const std::string& ref) const { return std::filesystem::exists(blob_path(ref)); }

}  // namespace sloop::dei
