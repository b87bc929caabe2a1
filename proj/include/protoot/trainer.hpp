#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "protoot/assignment.hpp"
#include "protoot/encoder.hpp"
#include "protoot/losses.hpp"
#include "protoot/matrix.hpp"
#include "protoot/ot.hpp"
#include "protoot/rng.hpp"

namespace protoot {

enum class SolverChoice { Sot, ProtoOt, Uot, Pot, None };

std::string solver_choice_name(SolverChoice choice);
SolverChoice parse_solver_choice(const std::string& name);

// Sinkhorn schedule as stored in config files: "fixed:<n>" or
// "tol:<tol>:<max_iter>".
struct SinkhornMode {
    SolverConfig::Mode mode = SolverConfig::Mode::FixedIterations;
    std::size_t iterations = 3;
    double tol = 1e-8;
    std::size_t max_iter = 10000;

    std::string to_string() const;
    static SinkhornMode parse(const std::string& text);
    SolverConfig solver_config(double epsilon) const;
};

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t warmup_epochs = 10;
    std::size_t batch_size = 64;
    double learning_rate = 2.5e-4;
    double lambda = 0.01;
    double tau = 0.2;
    double momentum = 0.999;
    double epsilon = 0.05;
    SinkhornMode sinkhorn_mode;
    std::size_t k = 5;
    std::uint64_t seed = 7;
    SolverChoice intra_solver = SolverChoice::ProtoOt;
    SolverChoice cross_solver = SolverChoice::ProtoOt;
    double uot_kl_strength = 1.0;
    double pot_mass_fraction = 0.9;

    void validate() const;
};

// Flat key=value text, one pair per line, '#' comments; keys are the field
// names above. save_config emits a canonical form (fixed key order, shortest
// round-trip floats) so save -> load -> save is byte-identical.
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);
std::string serialize_config(const TrainConfig& cfg);
TrainConfig parse_config_text(const std::string& text);

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss_pre = 0.0;
    double loss_in = 0.0;
    double loss_cr = 0.0;
    double loss_total = 0.0;
    std::map<std::size_t, double> p_at_k;
    std::int64_t wallclock_ms = 0;
};

// Single-line JSON record with keys epoch, loss_pre, loss_in, loss_cr,
// loss_total, p_at_k, wallclock_ms.
std::string metrics_to_json(const EpochMetrics& m);
void save_metrics(const std::filesystem::path& path, const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> load_metrics(const std::filesystem::path& path);

// Input features per domain. Class labels are deliberately not part of this
// type; training never sees them.
struct TrainData {
    DenseMatrix a;
    DenseMatrix b;
};

// Ground-truth labels, consumed only by the per-epoch retrieval metrics.
struct EvalLabels {
    std::vector<int> a;
    std::vector<int> b;
};

struct TrainedModel {
    MlpEncoder encoder;
    MomentumEncoder momentum_encoder;
};

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

// theta -= lr * mhat / (sqrt(vhat) + 1e-8), decay constants (0.9, 0.999).
void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double learning_rate);

// Full mutable state of a run; run_training owns one, tests may drive
// train_epoch directly.
struct TrainerState {
    TrainConfig cfg;
    DenseMatrix data_a;
    DenseMatrix data_b;
    std::optional<EvalLabels> eval_labels;
    MlpEncoder encoder;
    MomentumEncoder momentum_encoder;
    MemoryBank bank_a;
    MemoryBank bank_b;
    AdamState adam;
    Rng rng;

    TrainerState(const TrainConfig& cfg, TrainData data, std::optional<EvalLabels> labels);
};

// One epoch: warm-up epochs optimize the pretraining loss only; afterwards
// K-means runs on each bank, assignments are solved once, and every batch
// takes a contrastive step followed by the momentum and bank updates.
EpochMetrics train_epoch(TrainerState& state, std::size_t epoch_index,
                         std::ostream* log = nullptr);

struct TrainResult {
    TrainedModel model;
    std::vector<EpochMetrics> history;
};

TrainResult run_training(const TrainConfig& cfg, TrainData data,
                         std::optional<EvalLabels> eval_labels, std::ostream* log = nullptr);

// k values reported by the per-epoch retrieval metrics.
const std::vector<std::size_t>& metric_k_values();

}  // namespace protoot
