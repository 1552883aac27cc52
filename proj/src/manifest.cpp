#include "trajstitch/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>

#include "trajstitch/errors.hpp"

namespace trajstitch::cli {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failure");
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace

ArtifactManifest ArtifactManifest::load(const std::string& workdir) {
    ArtifactManifest m;
    m.manifest_path_ = (std::filesystem::path(workdir) / "manifest.json").string();
    if (std::filesystem::exists(m.manifest_path_)) {
        const json doc = parse_json(read_file(m.manifest_path_));
        m.artifacts_ = doc.value("artifacts", json::object());
    }
    return m;
}

void ArtifactManifest::record(const std::string& path, const std::string& command, const std::string& config_hash) {
    artifacts_[path] = json{{"sha256", sha256_file(path)},
                            {"command", command},
                            {"config_sha256", config_hash},
                            {"created_at", now_iso8601()}};
}

void ArtifactManifest::check_input(const std::string& path) const {
    if (!artifacts_.contains(path)) return;
    const std::string expected = artifacts_.at(path).at("sha256").get<std::string>();
    const std::string actual = sha256_file(path);
    if (expected != actual)
        throw StaleArtifactError("input '" + path + "' does not match its manifest hash (" + actual +
                                 " != " + expected + ")");
}

void ArtifactManifest::save() const {
    write_file(manifest_path_, dump_json(json{{"artifacts", artifacts_}}) + "\n");
}

}  // namespace trajstitch::cli
