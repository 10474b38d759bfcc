#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "astream/data.hpp"
#include "astream/losses.hpp"
#include "astream/models.hpp"
#include "astream/trainer.hpp"

namespace astream {

// Plain-text key=value configuration with dotted section prefixes and '#'
// comments. Lookups are tracked so assembly can reject unknown keys by name.
class KvConfig {
public:
    static KvConfig parse_file(const std::filesystem::path& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_str(const std::string& key, const std::string& fallback);
    int get_int(const std::string& key, int fallback);
    double get_double(const std::string& key, double fallback);
    std::uint64_t get_seed(const std::string& key, std::uint64_t fallback);
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback);
    std::vector<std::string> get_str_list(const std::string& key, std::vector<std::string> fallback);

    // Throws ConfigError naming the first key never consumed by a getter.
    void reject_unknown_keys() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// Everything one experiment needs: task, generator, model, trainer, the loss
// sweep list, and the evaluation operating point.
struct RunConfig {
    TaskKind task = TaskKind::KWS;
    GenConfig gen;
    ModelConfig model;
    TrainConfig train;
    std::vector<LossSpec> losses;
    double target_fpr = 0.02;
    std::string data_dir;  // dataset location; empty means <out>/dataset

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_kv(KvConfig kv);
    static RunConfig defaults(TaskKind task);

    // --seed: one master seed replaces the generator/model/trainer seeds.
    void override_seed(std::uint64_t seed);
    void validate() const;
};

}  // namespace astream
