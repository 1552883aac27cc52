#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "trajstitch/jsonio.hpp"

namespace trajstitch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitStale = 4;

// Flat key=value configuration with a fixed schema per command. Values are
// kept as strings; typed getters parse on demand. Unknown keys are rejected.
class RunConfig {
  public:
    explicit RunConfig(std::map<std::string, std::string> defaults);

    // key=value lines; '#' starts a comment, blank lines ignored
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void set_kv(const std::string& kv);  // "key=value"

    const std::string& get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_seed(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;      // comma separated
    std::vector<std::uint64_t> get_seed_list(const std::string& key) const;

    json echo() const;               // effective config as a json object
    std::string config_hash() const;  // sha256 of the echo

  private:
    std::map<std::string, std::string> values_;
};

// Schemas (key -> default) for every subcommand.
std::map<std::string, std::string> gen_data_schema();
std::map<std::string, std::string> train_embedding_schema();
std::map<std::string, std::string> train_stitcher_schema();
std::map<std::string, std::string> train_planner_schema();
std::map<std::string, std::string> train_inverse_schema();
std::map<std::string, std::string> build_index_schema();
std::map<std::string, std::string> augment_schema();
std::map<std::string, std::string> eval_schema();
std::map<std::string, std::string> make_tasks_schema();
std::map<std::string, std::string> plot_schema();

// Command bodies. They throw ConfigError / IoError / StaleArtifactError;
// run_command maps those to exit codes 2 / 3 / 4.
void cmd_gen_data(const RunConfig& cfg, const std::string& workdir);
void cmd_train_embedding(const RunConfig& cfg, const std::string& workdir);
void cmd_train_stitcher(const RunConfig& cfg, const std::string& workdir);
void cmd_train_planner(const RunConfig& cfg, const std::string& workdir);
void cmd_train_inverse(const RunConfig& cfg, const std::string& workdir);
void cmd_build_index(const RunConfig& cfg, const std::string& workdir);
void cmd_augment(const RunConfig& cfg, const std::string& workdir);
void cmd_eval(const RunConfig& cfg, const std::string& workdir);
void cmd_make_tasks(const RunConfig& cfg, const std::string& workdir);
void cmd_plot(const RunConfig& cfg, const std::string& workdir);

std::map<std::string, std::string> schema_for(const std::string& command);

// Builds the config (defaults <- file <- overrides), runs the command, and
// returns the process exit code.
int run_command(const std::string& command, const std::string& config_file,
                const std::vector<std::string>& overrides, const std::string& workdir);

}  // namespace trajstitch::cli
