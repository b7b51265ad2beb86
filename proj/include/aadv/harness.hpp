#pragma once

#include "aadv/attack.hpp"
#include "aadv/classifier.hpp"
#include "aadv/metrics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace aadv {

/// Flat key=value configuration. Every key has a default; a config file
/// overrides defaults and command-line flags override the file. The fully
/// resolved set is echoed into every report.
class ExperimentConfig {
public:
    static ExperimentConfig defaults();

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_seed() const;

    /// key=value lines; '#' comments and blank lines ignored.
    void load_file(const std::string& path);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return kv_; }

private:
    std::vector<std::pair<std::string, std::string>> kv_;
};

/// Accepts "8/255"-style rationals or plain decimals.
double parse_eps(const std::string& text);

AttackConfig attack_config_from(const ExperimentConfig& cfg);

/// Everything a batch of attacks needs: the frozen model plus the sampled
/// (correctly classified) validation images and their random targets.
struct AttackPlan {
    ClassifierModel model;
    Dataset data;
    std::vector<std::size_t> image_ids;
    std::vector<int> targets;

    std::uint64_t image_list_hash() const;
};

class ShortfallError : public std::runtime_error {
public:
    ShortfallError(std::size_t requested, std::size_t available)
        : std::runtime_error("only " + std::to_string(available) +
                             " correctly classified validation images available, " +
                             std::to_string(requested) + " requested"),
          requested(requested), available(available) {}
    std::size_t requested, available;
};

AttackPlan prepare_plan(const ExperimentConfig& cfg);

/// Per-image attack seed: splitmix64 over the "attack" stream plus image id,
/// so results are independent of batch composition and order.
std::uint64_t per_image_seed(std::uint64_t global_seed, std::size_t image_id);

using AttackFn = std::function<AttackResult(const ClassifierModel&, const Tensor&, int,
                                            const AttackConfig&)>;

/// Runs fn over the plan with a bounded worker pool; report rows are ordered
/// by image id regardless of completion order.
RunReport run_plan(const AttackPlan& plan, const ExperimentConfig& cfg, const AttackFn& fn,
                   const std::string& variant_name, bool* truncated = nullptr);

// Subcommands. Each returns a process exit status.
int cmd_train(const ExperimentConfig& cfg);
int cmd_attack(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_encoders(const ExperimentConfig& cfg);
int cmd_report(const std::string& path);

} // namespace aadv
