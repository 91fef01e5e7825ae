#include "prefjudge/datastore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "prefjudge/errors.hpp"
#include "prefjudge/random.hpp"

namespace prefjudge {

namespace fs = std::filesystem;

std::string canonical_dump(const Json& value) {
    // nlohmann::json stores objects in std::map, so keys come out sorted.
    return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

void check_schema_version(const Json& record, std::string_view source) {
    auto where = source.empty() ? std::string{} : " in " + std::string(source);
    if (!record.is_object() || !record.contains("schema_version") || !record["schema_version"].is_string())
        throw DataIntegrityError("record without schema_version" + where);
    const auto version = record["schema_version"].get<std::string>();
    int major = -1;
    try {
        major = std::stoi(version.substr(0, version.find('.')));
    } catch (const std::exception&) {
        throw DataIntegrityError("unparseable schema_version '" + version + "'" + where);
    }
    if (major != kSchemaMajor)
        throw DataIntegrityError("unsupported schema_version '" + version + "'" + where + " (reader supports " +
                                 std::to_string(kSchemaMajor) + ".x)");
}

Json with_schema_version(Json record) {
    record["schema_version"] = kSchemaVersion;
    return record;
}

namespace {

[[noreturn]] void throw_io(const std::string& what, const fs::path& path) {
    throw DataIntegrityError(what + " " + path.string() + ": " + std::strerror(errno));
}

bool parses(std::string_view line) {
    return Json::accept(line);
}

}  // namespace

QuarantineResult quarantine_torn_tail(const fs::path& path) {
    QuarantineResult result;
    std::error_code ec;
    if (!fs::exists(path, ec)) return result;

    std::string content;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw_io("cannot open", path);
        std::ostringstream ss;
        ss << in.rdbuf();
        content = std::move(ss).str();
    }

    std::size_t valid = content.size();
    if (!content.empty() && content.back() != '\n') {
        // Unterminated last line: torn write.
        const auto prev = content.rfind('\n');
        valid = prev == std::string::npos ? 0 : prev + 1;
    } else if (!content.empty()) {
        // Terminated, but the final line may still be garbage from a crash.
        const auto prev = content.rfind('\n', content.size() - 2);
        const std::size_t start = (prev == std::string::npos || content.size() < 2) ? 0 : prev + 1;
        std::string_view last(content.data() + start, content.size() - 1 - start);
        if (!parses(last)) valid = start;
    }

    result.valid_bytes = valid;
    result.quarantined_bytes = content.size() - valid;
    if (result.quarantined_bytes == 0) return result;

    {
        std::ofstream side(fs::path(path.string() + ".corrupt"), std::ios::binary | std::ios::app);
        if (!side) throw_io("cannot open quarantine sidecar for", path);
        side.write(content.data() + valid, static_cast<std::streamsize>(result.quarantined_bytes));
        if (content.back() != '\n') side.put('\n');
    }
    fs::resize_file(path, valid, ec);
    if (ec) throw DataIntegrityError("cannot truncate " + path.string() + ": " + ec.message());
    return result;
}

JsonlWriter::JsonlWriter(fs::path path, SyncPolicy sync) : path_(std::move(path)), sync_(sync) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    quarantine_ = quarantine_torn_tail(path_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw_io("cannot open for append", path_);
}

JsonlWriter::~JsonlWriter() {
    if (fd_ >= 0) {
        ::fsync(fd_);
        ::close(fd_);
    }
}

void JsonlWriter::append(const Json& record) {
    std::string line;
    try {
        line = canonical_dump(record);
    } catch (const Json::exception& e) {
        throw DataIntegrityError(std::string("cannot serialize record: ") + e.what());
    }
    line.push_back('\n');

    std::lock_guard lock(mutex_);
    std::size_t off = 0;
    while (off < line.size()) {
        const auto n = ::write(fd_, line.data() + off, line.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_io("write failed on", path_);
        }
        off += static_cast<std::size_t>(n);
    }
    if (sync_ == SyncPolicy::EveryRecord && ::fdatasync(fd_) != 0) throw_io("fdatasync failed on", path_);
}

void JsonlWriter::flush() {
    std::lock_guard lock(mutex_);
    if (::fsync(fd_) != 0) throw_io("fsync failed on", path_);
}

void append_record(const fs::path& path, const Json& record) {
    JsonlWriter writer(path);
    writer.append(record);
}

void for_each_jsonl(const fs::path& path, const std::function<void(const Json&)>& fn, bool require_schema_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::error_code ec;
        if (!fs::exists(path, ec)) return;
        throw_io("cannot open", path);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json value;
        try {
            value = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DataIntegrityError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line (" +
                                     e.what() + ")");
        }
        if (require_schema_version) check_schema_version(value, path.string() + ":" + std::to_string(lineno));
        fn(value);
    }
}

std::vector<Json> read_jsonl(const fs::path& path, bool require_schema_version) {
    std::vector<Json> out;
    for_each_jsonl(path, [&](const Json& j) { out.push_back(j); }, require_schema_version);
    return out;
}

std::set<CompositeKey> resume_keys(const fs::path& path, const std::vector<std::string>& key_fields) {
    std::set<CompositeKey> keys;
    for_each_jsonl(
        path,
        [&](const Json& j) {
            CompositeKey key;
            key.reserve(key_fields.size());
            for (const auto& field : key_fields) {
                const auto it = j.find(field);
                if (it == j.end()) throw DataIntegrityError("record in " + path.string() + " lacks key field " + field);
                key.push_back(it->is_string() ? it->get<std::string>() : canonical_dump(*it));
            }
            keys.insert(std::move(key));
        },
        false);
    return keys;
}

void write_json_file(const fs::path& path, const Json& value, bool pretty) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Write-then-rename so readers never observe a half-written document.
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_io("cannot write", tmp);
        out << (pretty ? value.dump(2) : canonical_dump(value)) << '\n';
        if (!out) throw_io("cannot write", tmp);
    }
    fs::rename(tmp, path);
}

Json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open", path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DataIntegrityError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Rollout: return "Rollout";
        case Stage::Verify: return "Verify";
        case Stage::Pair: return "Pair";
        case Stage::Review: return "Review";
        case Stage::Eval: return "Eval";
        case Stage::Bon: return "Bon";
        case Stage::Train: return "Train";
    }
    return "Rollout";
}

Json to_json(const RunManifest& m) {
    return with_schema_version(Json{{"run_id", m.run_id},
                                    {"stage", to_string(m.stage)},
                                    {"global_seed", m.global_seed},
                                    {"config_digest", m.config_digest},
                                    {"created_at", m.created_at},
                                    {"input_paths", m.input_paths},
                                    {"output_paths", m.output_paths}});
}

std::string config_digest(const Json& config) {
    const auto text = canonical_dump(config);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(md[i]);
    return hex.str();
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RunManifest make_manifest(Stage stage, std::uint64_t seed, const Json& config, std::vector<std::string> inputs,
                          std::vector<std::string> outputs) {
    RunManifest m;
    m.stage = stage;
    m.global_seed = seed;
    m.config_digest = config_digest(config);
    m.created_at = utc_timestamp();
    m.input_paths = std::move(inputs);
    m.output_paths = std::move(outputs);
    const auto nonce = std::chrono::steady_clock::now().time_since_epoch().count() ^ static_cast<long>(::getpid());
    std::ostringstream id;
    id << std::string(to_string(stage)) << '-' << m.config_digest.substr(0, 12) << '-' << std::hex
       << (splitmix64(static_cast<std::uint64_t>(nonce)) & 0xffffffffULL);
    m.run_id = id.str();
    return m;
}

void record_manifest(const fs::path& manifest_path, const RunManifest& manifest) {
    Json doc = Json::object();
    std::error_code ec;
    if (fs::exists(manifest_path, ec)) {
        doc = read_json_file(manifest_path);
        if (!doc.is_object()) doc = Json::object();
    }
    doc[std::string(to_string(manifest.stage))] = to_json(manifest);
    write_json_file(manifest_path, doc, true);
}

}  // namespace prefjudge
