#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepsr/bench.hpp"
#include "deepsr/gp.hpp"
#include "deepsr/trainer.hpp"

namespace deepsr {

/// Everything a fit or campaign needs, addressable as flat `section.key`
/// entries. Defaults are the published DSR and GP hyperparameter tables.
struct Settings {
    TrainConfig dsr;
    GPConfig gp;
    Method method = Method::DSR;
    std::string benchmark;          // task.benchmark
    std::string data;               // task.data, CSV path
    std::string test_data;          // task.test_data, optional CSV path
    std::string constants = "auto"; // task.constants: auto | yes | no
    std::vector<std::string> operators = Library::default_operators();
    double noise = 0.0;
    int data_multiplier = 1;
    std::string ablation = "none";
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string suite = "nguyen";         // bench.suite
    int runs = 5;                         // bench.runs, seeds run.seed .. run.seed + runs - 1
    std::string bench_methods = "dsr";    // bench.methods: dsr | gp | both
    std::vector<double> noise_grid{0.0};  // bench.noise_grid: comma list or "default"

    /// Throws std::invalid_argument naming the key for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Every key with its current value, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const;

    /// Method configs with the run-level seed, thread count and BFGS options applied.
    TrainConfig train_config() const;
    GPConfig gp_config() const;
    CampaignConfig campaign_config() const;
};

/// `key = value` lines; blank lines and lines starting with '#' are ignored.
void read_settings(std::istream& in, Settings& settings, std::string_view source = "<config>");
void read_settings_file(const std::filesystem::path& path, Settings& settings);
void write_settings(std::ostream& out, const Settings& settings);

/// Applies a single "key=value" override.
void apply_override(Settings& settings, std::string_view assignment);

}  // namespace deepsr
