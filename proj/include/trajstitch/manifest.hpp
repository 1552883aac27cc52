#pragma once

#include <string>

#include "trajstitch/jsonio.hpp"

namespace trajstitch::cli {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Workspace-level record of produced artifacts: per path the content hash,
// producing command and config hash. The hash covers file bytes only;
// timestamps are informational.
class ArtifactManifest {
  public:
    static ArtifactManifest load(const std::string& workdir);

    void record(const std::string& path, const std::string& command, const std::string& config_hash);

    // Throws StaleArtifactError when the manifest knows `path` under a
    // different content hash. Unknown paths pass (produced elsewhere).
    void check_input(const std::string& path) const;

    void save() const;

    const json& artifacts() const { return artifacts_; }

  private:
    std::string manifest_path_;
    json artifacts_ = json::object();
};

}  // namespace trajstitch::cli
