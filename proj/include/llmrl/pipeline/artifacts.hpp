#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/pipeline/config.hpp"

namespace llmrl::pipeline {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

/// Resolves every path against a workspace root.
class Workspace {
public:
    Workspace(fs::path root, const Config& cfg) : root_(std::move(root)), out_(resolve(cfg.str("output_dir"))) {}

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : root_ / path;
    }

    const fs::path& root() const noexcept { return root_; }
    fs::path artifact_dir(const std::string& sub) const { return out_ / sub; }

    /// Output directory for a command, created if needed.
    fs::path make_dir(const std::string& sub) const {
        auto d = artifact_dir(sub);
        std::error_code ec;
        fs::create_directories(d, ec);
        if (ec) throw DataError(kModule, "cannot create " + d.string() + ": " + ec.message());
        return d;
    }

    /// An input produced by an earlier command; missing means that command
    /// has not run yet.
    fs::path require(const std::string& sub, const std::string& file, const char* producer) const {
        auto p = artifact_dir(sub) / file;
        if (!fs::exists(p)) {
            throw DataError(kModule, p.string() + " not found; run '" + producer + "' first");
        }
        return p;
    }

private:
    fs::path root_;
    fs::path out_;
};

inline std::string read_file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(kModule, "cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Writes through a temporary file so a failed command never leaves a
/// half-written artifact behind.
inline void write_file_bytes(const fs::path& p, const std::string& bytes) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(kModule, "cannot write " + p.string());
        out << bytes;
        if (!out) throw DataError(kModule, "write failed for " + p.string());
    }
    fs::rename(tmp, p);
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_file_bytes(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(read_file_bytes(p));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(kModule, p.string() + ": " + e.what());
    }
}

inline std::string file_digest(const fs::path& p) { return hex64(fnv1a64(read_file_bytes(p))); }

/// UTC timestamp. SOURCE_DATE_EPOCH pins it, which makes manifests
/// byte-identical across reruns as well.
inline std::string timestamp_utc() {
    std::time_t t;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Records what produced an artifact directory: the command, the full
/// resolved config (enough to rerun it via --config <manifest>), seeds,
/// input and output digests, and when it ran.
struct Manifest {
    explicit Manifest(std::string cmd) : command(std::move(cmd)) {}

    std::string command;
    nlohmann::json seeds = nlohmann::json::object();
    std::vector<fs::path> inputs;
    std::vector<std::string> outputs;  // file names inside the artifact directory
    nlohmann::json extra = nlohmann::json::object();
};

inline void write_manifest(const fs::path& dir, const Manifest& m, const Config& cfg, const Workspace& ws) {
    nlohmann::json inputs = nlohmann::json::array(), outputs = nlohmann::json::array();
    for (const auto& p : m.inputs) {
        inputs.push_back({{"path", fs::relative(p, ws.root()).generic_string()}, {"digest", file_digest(p)}});
    }
    for (const auto& f : m.outputs) outputs.push_back({{"file", f}, {"digest", file_digest(dir / f)}});
    nlohmann::json j = {{"manifest_version", kManifestVersion},
                        {"command", m.command},
                        {"config_digest", cfg.digest()},
                        {"config", cfg.values()},
                        {"seeds", m.seeds},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"created_at", timestamp_utc()}};
    if (!m.extra.empty()) j["details"] = m.extra;
    write_json(dir / "manifest.json", j);
}

}  // namespace llmrl::pipeline
