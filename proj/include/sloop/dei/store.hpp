#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/dei/records.hpp"
#include "sloop/ensemble.hpp"
#include "sloop/feedback.hpp"

namespace sloop::dei {

enum class LogOp { upsert, transition, score_write, task_write, merge };

const char* to_string(LogOp op);
LogOp log_op_from_string(const std::string& s);

struct LogEntry {
  std::uint64_t seq = 0;
  LogOp op = LogOp::upsert;
  nlohmann::json payload;
  std::uint32_t checksum = 0;  // CRC-32 of the serialized payload frame
};

// Thrown by an armed crash point; the frame on disk is left torn.
struct InjectedCrash : std::runtime_error {
  InjectedCrash() : std::runtime_error("injected crash") {}
};

// Append-only log. Frame: u32 length, u32 crc32, then `length` bytes of
// JSON {"seq","op","payload"}, little-endian.
class TransactionLog {
 public:
  TransactionLog() = default;
  TransactionLog(const TransactionLog&) = delete;
  TransactionLog& operator=(const TransactionLog&) = delete;
  ~TransactionLog();

  void open(const std::filesystem::path& path, bool sync);
  void close();

  // Durable (flushed, and fsynced when sync is on) before returning.
  void append(const LogEntry& entry);
  // Empties the file after a snapshot made it redundant.
  void truncate();

  // The next append with this seq writes only `fraction` of its frame and
  // throws InjectedCrash.
  void arm_crash(std::uint64_t seq, double fraction);

  struct ReadResult {
    std::vector<LogEntry> entries;
    bool torn = false;  // replay stopped at a short or corrupt frame
    std::uint64_t valid_bytes = 0;
  };
  static ReadResult read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  bool sync_ = true;
  std::optional<std::pair<std::uint64_t, double>> crash_;
};

std::vector<std::uint8_t> encode_frame(const LogEntry& entry);

// The committed state: every mutation goes through apply().
struct StoreState {
  std::uint64_t last_seq = 0;
  std::map<std::string, ImageRecord> images;
  std::map<std::string, StoredRanking> rankings;
  TaskBoard tasks;
  CohortPartition cohorts;
  std::map<std::string, EnsembleWeights> weights;  // per workflow
  std::map<std::string, nlohmann::json> docs;      // small named documents (metrics rows, counters)
  std::uint64_t image_counter = 0;

  void apply(const LogEntry& entry);

  nlohmann::json to_json() const;
  static StoreState from_json(const nlohmann::json& j);
};

// Log + snapshot + content-addressed blobs under one data directory.
class Store {
 public:
  struct Options {
    std::filesystem::path data_dir;
    bool sync = true;
    FeedbackConfig feedback;
  };

  explicit Store(Options options);

  const StoreState& state() const { return state_; }

  // Appends and then applies. Returns the assigned seq.
  std::uint64_t commit(LogOp op, nlohmann::json payload);

  // Writes the snapshot atomically, then truncates the log.
  void snapshot();

  std::string put_blob(std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> get_blob(const std::string& ref) const;
  bool has_blob(const std::string& ref) const;

  TransactionLog& log() { return log_; }
  bool recovered_torn_log() const { return torn_; }
  std::size_t replayed_entries() const { return replayed_; }

 private:
  std::filesystem::path blob_path(const std::string& ref) const;

  Options options_;
  StoreState state_;
  TransactionLog log_;
  bool torn_ = false;
  std::size_t replayed_ = 0;
};

}  // namespace sloop::dei
