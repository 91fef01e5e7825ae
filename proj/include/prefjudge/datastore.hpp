#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefjudge {

using Json = nlohmann::json;

// Every persisted record carries this; readers accept any 1.x.
inline constexpr std::string_view kSchemaVersion = "1.0";
inline constexpr int kSchemaMajor = 1;

// Single-line canonical form: sorted keys, no insignificant whitespace,
// UTF-8 passed through. serialize(parse(line)) == line for anything this
// function produced.
std::string canonical_dump(const Json& value);

// Throws DataIntegrityError when the record has no schema_version or an
// unsupported major version.
void check_schema_version(const Json& record, std::string_view source = {});

// Stamps schema_version onto an object record.
Json with_schema_version(Json record);

struct QuarantineResult {
    std::uint64_t valid_bytes = 0;
    std::uint64_t quarantined_bytes = 0;
};

// Detects a torn trailing line (no LF terminator or not parseable JSON) left
// by a crashed writer, appends it to `<path>.corrupt` and truncates the file
// to its valid prefix. Missing files are left alone.
QuarantineResult quarantine_torn_tail(const std::filesystem::path& path);

enum class SyncPolicy { OnClose, EveryRecord };

// Append-only JSONL writer. One write(2) per record on an O_APPEND descriptor;
// thread-safe, so concurrent producers can share one writer.
class JsonlWriter {
public:
    explicit JsonlWriter(std::filesystem::path path, SyncPolicy sync = SyncPolicy::OnClose);
    ~JsonlWriter();

    JsonlWriter(const JsonlWriter&) = delete;
    JsonlWriter& operator=(const JsonlWriter&) = delete;

    void append(const Json& record);
    void flush();

    const std::filesystem::path& path() const noexcept { return path_; }
    const QuarantineResult& quarantine() const noexcept { return quarantine_; }

private:
    std::filesystem::path path_;
    SyncPolicy sync_;
    int fd_ = -1;
    std::mutex mutex_;
    QuarantineResult quarantine_;
};

void append_record(const std::filesystem::path& path, const Json& record);

// Reads every line as JSON; a malformed line throws DataIntegrityError naming
// the line number. Missing file yields an empty vector.
std::vector<Json> read_jsonl(const std::filesystem::path& path, bool require_schema_version = true);

// Streams lines without loading the whole file.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const Json&)>& fn,
                    bool require_schema_version = true);

using CompositeKey = std::vector<std::string>;

// Set of key tuples already present in the file. Key fields are rendered as
// strings (numbers via their canonical dump).
std::set<CompositeKey> resume_keys(const std::filesystem::path& path, const std::vector<std::string>& key_fields);

void write_json_file(const std::filesystem::path& path, const Json& value, bool pretty = false);
Json read_json_file(const std::filesystem::path& path);

enum class Stage { Rollout, Verify, Pair, Review, Eval, Bon, Train };

std::string_view to_string(Stage stage);

struct RunManifest {
    std::string run_id;
    Stage stage = Stage::Rollout;
    std::uint64_t global_seed = 0;
    std::string config_digest;
    std::string created_at;
    std::vector<std::string> input_paths;
    std::vector<std::string> output_paths;
};

Json to_json(const RunManifest& manifest);

// Hex SHA-256 of the canonical dump; key order in the input does not matter.
std::string config_digest(const Json& config);

std::string utc_timestamp();

RunManifest make_manifest(Stage stage, std::uint64_t seed, const Json& config, std::vector<std::string> inputs,
                          std::vector<std::string> outputs);

// manifest.json holds the latest RunManifest per stage, keyed by stage name.
void record_manifest(const std::filesystem::path& manifest_path, const RunManifest& manifest);

}  // namespace prefjudge
