#include "protoot/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "protoot/errors.hpp"
#include "protoot/eval.hpp"
#include "protoot/feature_io.hpp"
#include "protoot/kmeans.hpp"

namespace protoot {

namespace {

// Desk-scale encoder shape and feature-space augmentation strengths.
constexpr std::size_t kEncoderHidden = 64;
constexpr std::size_t kEncoderOut = 32;
constexpr double kAugNoiseSigma = 0.05;
constexpr double kAugMaskProb = 0.1;

const std::vector<std::size_t> kMetricKs = {1, 5, 10, 15};

}  // namespace

const std::vector<std::size_t>& metric_k_values() { return kMetricKs; }

std::string solver_choice_name(SolverChoice choice) {
    switch (choice) {
        case SolverChoice::Sot: return "sot";
        case SolverChoice::ProtoOt: return "protoot";
        case SolverChoice::Uot: return "uot";
        case SolverChoice::Pot: return "pot";
        case SolverChoice::None: return "none";
    }
    throw Error("solver_choice_name: unreachable");
}

SolverChoice parse_solver_choice(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "sot") return SolverChoice::Sot;
    if (lower == "protoot") return SolverChoice::ProtoOt;
    if (lower == "uot") return SolverChoice::Uot;
    if (lower == "pot") return SolverChoice::Pot;
    if (lower == "none") return SolverChoice::None;
    throw ParseError("unknown solver '" + name + "' (expected sot|protoot|uot|pot|none)", 1, 1);
}

std::string SinkhornMode::to_string() const {
    if (mode == SolverConfig::Mode::FixedIterations) {
        return "fixed:" + std::to_string(iterations);
    }
    return "tol:" + format_double(tol) + ":" + std::to_string(max_iter);
}

SinkhornMode SinkhornMode::parse(const std::string& text) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : text) {
        if (c == ':') {
            parts.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    parts.push_back(current);

    SinkhornMode m;
    if (parts.size() == 2 && parts[0] == "fixed") {
        m.mode = SolverConfig::Mode::FixedIterations;
        m.iterations = static_cast<std::size_t>(parse_integer(parts[1], 1, 1, "iteration count"));
        if (m.iterations == 0) throw ParseError("sinkhorn iterations must be >= 1", 1, 1);
        return m;
    }
    if (parts.size() == 3 && parts[0] == "tol") {
        m.mode = SolverConfig::Mode::Tolerance;
        m.tol = parse_double(parts[1], 1, 1, "sinkhorn tolerance");
        m.max_iter = static_cast<std::size_t>(parse_integer(parts[2], 1, 1, "max iterations"));
        if (!(m.tol > 0.0) || m.max_iter == 0) {
            throw ParseError("sinkhorn tolerance mode needs tol > 0 and max_iter >= 1", 1, 1);
        }
        return m;
    }
    throw ParseError("bad sinkhorn_mode '" + text + "' (expected fixed:<n> or tol:<tol>:<max>)",
                     1, 1);
}

SolverConfig SinkhornMode::solver_config(double epsilon) const {
    if (mode == SolverConfig::Mode::FixedIterations) {
        return SolverConfig::fixed_iterations(iterations, epsilon);
    }
    return SolverConfig::tolerance(tol, max_iter, epsilon);
}

void TrainConfig::validate() const {
    if (warmup_epochs > epochs) throw Error("config: warmup_epochs must be <= epochs");
    if (batch_size < 2) throw Error("config: batch_size must be >= 2");
    if (k == 0) throw Error("config: k must be >= 1");
    if (!(tau > 0.0)) throw Error("config: tau must be > 0");
    if (!(epsilon > 0.0)) throw Error("config: epsilon must be > 0");
    if (lambda < 0.0) throw Error("config: lambda must be >= 0");
    if (learning_rate < 0.0) throw Error("config: learning_rate must be >= 0");
    if (momentum < 0.0 || momentum > 1.0) throw Error("config: momentum must lie in [0, 1]");
    if (!(uot_kl_strength > 0.0)) throw Error("config: uot_kl_strength must be > 0");
    if (!(pot_mass_fraction > 0.0) || pot_mass_fraction > 1.0) {
        throw Error("config: pot_mass_fraction must lie in (0, 1]");
    }
}

std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "epochs=" << cfg.epochs << '\n';
    out << "warmup_epochs=" << cfg.warmup_epochs << '\n';
    out << "batch_size=" << cfg.batch_size << '\n';
    out << "learning_rate=" << format_double(cfg.learning_rate) << '\n';
    out << "lambda=" << format_double(cfg.lambda) << '\n';
    out << "tau=" << format_double(cfg.tau) << '\n';
    out << "momentum=" << format_double(cfg.momentum) << '\n';
    out << "epsilon=" << format_double(cfg.epsilon) << '\n';
    out << "sinkhorn_mode=" << cfg.sinkhorn_mode.to_string() << '\n';
    out << "k=" << cfg.k << '\n';
    out << "seed=" << cfg.seed << '\n';
    out << "intra_solver=" << solver_choice_name(cfg.intra_solver) << '\n';
    out << "cross_solver=" << solver_choice_name(cfg.cross_solver) << '\n';
    out << "uot_kl_strength=" << format_double(cfg.uot_kl_strength) << '\n';
    out << "pot_mass_fraction=" << format_double(cfg.pot_mass_fraction) << '\n';
    return out.str();
}

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream stream(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(stream, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", line_no, 1);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ParseError("empty key or value", line_no, 1);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
            throw ParseError("duplicate key '" + key + "'", line_no, 1);
        }
        seen.push_back(key);

        if (key == "epochs") {
            cfg.epochs = static_cast<std::size_t>(parse_integer(value, line_no, 1, key));
        } else if (key == "warmup_epochs") {
            cfg.warmup_epochs = static_cast<std::size_t>(parse_integer(value, line_no, 1, key));
        } else if (key == "batch_size") {
            cfg.batch_size = static_cast<std::size_t>(parse_integer(value, line_no, 1, key));
        } else if (key == "learning_rate") {
            cfg.learning_rate = parse_double(value, line_no, 1, key);
        } else if (key == "lambda") {
            cfg.lambda = parse_double(value, line_no, 1, key);
        } else if (key == "tau") {
            cfg.tau = parse_double(value, line_no, 1, key);
        } else if (key == "momentum") {
            cfg.momentum = parse_double(value, line_no, 1, key);
        } else if (key == "epsilon") {
            cfg.epsilon = parse_double(value, line_no, 1, key);
        } else if (key == "sinkhorn_mode") {
            cfg.sinkhorn_mode = SinkhornMode::parse(value);
        } else if (key == "k") {
            cfg.k = static_cast<std::size_t>(parse_integer(value, line_no, 1, key));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_integer(value, line_no, 1, key));
        } else if (key == "intra_solver") {
            cfg.intra_solver = parse_solver_choice(value);
        } else if (key == "cross_solver") {
            cfg.cross_solver = parse_solver_choice(value);
        } else if (key == "uot_kl_strength") {
            cfg.uot_kl_strength = parse_double(value, line_no, 1, key);
        } else if (key == "pot_mass_fraction") {
            cfg.pot_mass_fraction = parse_double(value, line_no, 1, key);
        } else {
            throw ParseError("unknown config key '" + key + "'", line_no, 1);
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw IoError("save_config: cannot open " + path.string());
    out << serialize_config(cfg);
    if (!out) throw IoError("save_config: write failed for " + path.string());
}

std::string metrics_to_json(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["loss_pre"] = m.loss_pre;
    j["loss_in"] = m.loss_in;
    j["loss_cr"] = m.loss_cr;
    j["loss_total"] = m.loss_total;
    nlohmann::ordered_json pk = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.p_at_k) pk[std::to_string(k)] = v;
    j["p_at_k"] = std::move(pk);
    j["wallclock_ms"] = m.wallclock_ms;
    return j.dump();
}

void save_metrics(const std::filesystem::path& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("save_metrics: cannot open " + path.string());
    for (const auto& m : history) out << metrics_to_json(m) << '\n';
    if (!out) throw IoError("save_metrics: write failed for " + path.string());
}

std::vector<EpochMetrics> load_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_metrics: cannot open " + path.string());
    std::vector<EpochMetrics> history;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad metrics record: ") + e.what(), line_no, 1);
        }
        EpochMetrics m;
        try {
            m.epoch = j.at("epoch").get<std::size_t>();
            m.loss_pre = j.at("loss_pre").get<double>();
            m.loss_in = j.at("loss_in").get<double>();
            m.loss_cr = j.at("loss_cr").get<double>();
            m.loss_total = j.at("loss_total").get<double>();
            for (const auto& [key, value] : j.at("p_at_k").items()) {
                m.p_at_k[static_cast<std::size_t>(std::stoull(key))] = value.get<double>();
            }
            m.wallclock_ms = j.at("wallclock_ms").get<std::int64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad metrics record: ") + e.what(), line_no, 1);
        }
        history.push_back(std::move(m));
    }
    return history;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
    std::ofstream out(path);
    if (!out) throw IoError("save_model: cannot open " + path.string());
    const MlpEncoder& enc = model.encoder;
    out << "ucir-model 1 " << enc.d_in << ' ' << enc.hidden << ' ' << enc.d_out << ' '
        << format_double(model.momentum_encoder.momentum) << '\n';
    auto dump = [&out](const char* tag, const std::vector<double>& values) {
        out << tag;
        for (double v : values) out << ' ' << format_double(v);
        out << '\n';
    };
    dump("online", enc.params);
    dump("target", model.momentum_encoder.net.params);
    if (!out) throw IoError("save_model: write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_model: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing model header", 1, 1);
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    std::size_t d_in = 0, hidden = 0, d_out = 0;
    std::string momentum_token;
    header >> magic >> version >> d_in >> hidden >> d_out >> momentum_token;
    if (!header || magic != "ucir-model" || version != 1) {
        throw ParseError("expected 'ucir-model 1 <d_in> <hidden> <d_out> <momentum>'", 1, 1);
    }
    TrainedModel model;
    model.encoder = MlpEncoder::zeros(d_in, hidden, d_out);
    model.momentum_encoder.net = MlpEncoder::zeros(d_in, hidden, d_out);
    model.momentum_encoder.momentum = parse_double(momentum_token, 1, 6, "momentum");

    auto read_params = [&](const char* tag, std::vector<double>& dst, std::size_t line_no) {
        if (!std::getline(in, line)) throw ParseError("missing parameter block", line_no, 1);
        std::istringstream stream(line);
        std::string token;
        if (!(stream >> token) || token != tag) {
            throw ParseError(std::string("expected parameter block '") + tag + "'", line_no, 1);
        }
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (!(stream >> token)) {
                throw ParseError("parameter block truncated", line_no, i + 2);
            }
            dst[i] = parse_double(token, line_no, i + 2, "parameter");
        }
        if (stream >> token) throw ParseError("trailing parameters", line_no, dst.size() + 2);
    };
    read_params("online", model.encoder.params, 2);
    read_params("target", model.momentum_encoder.net.params, 3);
    return model;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double learning_rate) {
    if (params.size() != grad.size()) throw DimMismatchError("adam_step: gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw DimMismatchError("adam_step: state size mismatch");
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
        state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= learning_rate * mhat / (std::sqrt(vhat) + kEps);
    }
}

namespace {

MemoryBank init_bank(const MlpEncoder& momentum_net, const DenseMatrix& data,
                     const std::string& tag) {
    MemoryBank bank;
    bank.features = encoder_forward(momentum_net, data);
    bank.domain = tag;
    return bank;
}

}  // namespace

TrainerState::TrainerState(const TrainConfig& config, TrainData data,
                           std::optional<EvalLabels> labels)
    : cfg(config),
      data_a(std::move(data.a)),
      data_b(std::move(data.b)),
      eval_labels(std::move(labels)),
      rng(config.seed) {
    cfg.validate();
    if (data_a.cols() != data_b.cols()) {
        throw DimMismatchError("trainer: domain feature dims differ");
    }
    if (data_a.rows() < 2 || data_b.rows() < 2) {
        throw TooFewPointsError("trainer: each domain needs at least 2 samples");
    }
    if (eval_labels) {
        if (eval_labels->a.size() != data_a.rows() || eval_labels->b.size() != data_b.rows()) {
            throw DimMismatchError("trainer: evaluation label counts mismatch");
        }
    }
    encoder = MlpEncoder::random(data_a.cols(), kEncoderHidden, kEncoderOut, rng);
    momentum_encoder.net = encoder;
    momentum_encoder.momentum = cfg.momentum;
    bank_a = init_bank(momentum_encoder.net, data_a, "a");
    bank_b = init_bank(momentum_encoder.net, data_b, "b");
}

namespace {

struct EpochAssignments {
    bool ready = false;
    // Index 0 = domain a, 1 = domain b.
    PrototypeSet protos[2];
    std::vector<std::size_t> intra_labels[2];
    std::vector<std::vector<std::size_t>> intra_negatives[2];
    std::vector<std::size_t> cross_labels[2];  // into the *other* domain's prototypes
    std::vector<std::vector<std::size_t>> cross_negatives[2];
};

OtVariant variant_for(SolverChoice choice, const TrainConfig& cfg) {
    switch (choice) {
        case SolverChoice::Uot: return OtVariant::unbalanced(cfg.uot_kl_strength);
        case SolverChoice::Pot: return OtVariant::partial(cfg.pot_mass_fraction);
        default: return OtVariant::balanced();
    }
}

void require_converged(const TransportPlan& plan, const SolverConfig& cfg, const char* what) {
    if (cfg.mode == SolverConfig::Mode::Tolerance && !plan.converged) {
        throw NoConvergenceError(std::string(what) +
                                 ": sinkhorn did not reach the requested tolerance");
    }
}

// K-means on each bank, one transport solve per domain (and per direction
// when the cross loss is active); everything is held fixed for the epoch.
EpochAssignments compute_assignments(TrainerState& st) {
    const TrainConfig& cfg = st.cfg;
    const SolverConfig scfg = cfg.sinkhorn_mode.solver_config(cfg.epsilon);
    MemoryBank* banks[2] = {&st.bank_a, &st.bank_b};

    EpochAssignments asg;
    KMeansResult km[2];
    for (int d = 0; d < 2; ++d) {
        km[d] = kmeans(banks[d]->features, cfg.k, st.rng);
        asg.protos[d] = PrototypeSet{km[d].centroids, PrototypeSet::Source::KMeansInit};
    }

    if (cfg.intra_solver != SolverChoice::None) {
        for (int d = 0; d < 2; ++d) {
            const Marginal beta = cfg.intra_solver == SolverChoice::ProtoOt
                                      ? marginal_from_labels(km[d].labels, cfg.k)
                                      : Marginal::uniform(cfg.k);
            AssignmentState state = intra_assign(*banks[d], asg.protos[d], beta, scfg,
                                                 variant_for(cfg.intra_solver, cfg));
            require_converged(state.plan, scfg, "intra assignment");
            asg.protos[d] = update_prototypes(state.plan, *banks[d]);
            asg.intra_labels[d] = state.pseudo_labels;
            asg.intra_negatives[d] = build_negative_sets(state);
        }
    }

    if (cfg.cross_solver != SolverChoice::None) {
        for (int d = 0; d < 2; ++d) {
            const int o = 1 - d;
            const Marginal beta_cr = cfg.cross_solver == SolverChoice::ProtoOt
                                         ? cross_marginal_align(km[d], asg.protos[o])
                                         : Marginal::uniform(cfg.k);
            AssignmentState state = cross_assign(*banks[d], asg.protos[o], beta_cr, scfg,
                                                 variant_for(cfg.cross_solver, cfg));
            require_converged(state.plan, scfg, "cross assignment");
            asg.cross_labels[d] = state.pseudo_labels;
            asg.cross_negatives[d] = build_negative_sets(state);
        }
    }
    asg.ready = true;
    return asg;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    std::size_t begin = 0;
    while (begin < order.size()) {
        std::size_t end = std::min(begin + batch_size, order.size());
        // A lone trailing sample joins the previous batch (pretraining needs
        // at least two samples per batch).
        if (end - begin == 1 && !batches.empty()) {
            batches.back().push_back(order[begin]);
            break;
        }
        batches.emplace_back(order.begin() + begin, order.begin() + end);
        begin = end;
    }
    return batches;
}

struct LossAccumulator {
    double pre = 0.0;
    double in = 0.0;
    double cr = 0.0;
    double total = 0.0;
};

void batch_step(TrainerState& st, int d, const std::vector<std::size_t>& indices, bool warm,
                const EpochAssignments& asg, LossAccumulator& acc) {
    const TrainConfig& cfg = st.cfg;
    const DenseMatrix& data = d == 0 ? st.data_a : st.data_b;
    MemoryBank& bank = d == 0 ? st.bank_a : st.bank_b;
    const std::size_t bs = indices.size();

    DenseMatrix x(bs, data.cols(), 0.0);
    for (std::size_t b = 0; b < bs; ++b) {
        const auto src = data.row(indices[b]);
        auto dst = x.row(b);
        std::copy(src.begin(), src.end(), dst.begin());
    }

    ForwardCache cache;
    const UnitRowMatrix q = encoder_forward(st.encoder, x, &cache);
    const DenseMatrix x_aug = augment(x, st.rng, kAugNoiseSigma, kAugMaskProb);
    const UnitRowMatrix k_rows = encoder_forward(st.momentum_encoder.net, x_aug);

    LossValue step_loss;
    if (warm) {
        const LossGrad lg = loss_pretrain(q, k_rows, cfg.tau);
        step_loss = backprop(lg, st.encoder, cache);
        acc.pre += lg.value;
    } else {
        const std::size_t n_params = st.encoder.param_count();
        LossValue l_in;
        l_in.param_grad.assign(n_params, 0.0);
        if (cfg.intra_solver != SolverChoice::None) {
            std::vector<PositiveSetIntra> positives(bs);
            std::vector<std::vector<std::size_t>> negatives(bs);
            for (std::size_t b = 0; b < bs; ++b) {
                const std::size_t idx = indices[b];
                const auto aug_row = k_rows.row(b);
                positives[b].augmented.assign(aug_row.begin(), aug_row.end());
                positives[b].neighbor = nearest_neighbor(bank, q.row(b), idx).row;
                const std::size_t label = asg.intra_labels[d][idx];
                const auto proto_row = asg.protos[d].vectors.row(label);
                positives[b].prototype.assign(proto_row.begin(), proto_row.end());
                negatives[b] = asg.intra_negatives[d][idx];
            }
            const LossGrad lg = loss_intra(q, positives, negatives, asg.protos[d].vectors,
                                           cfg.tau);
            l_in = backprop(lg, st.encoder, cache);
        }

        LossValue l_cr;
        l_cr.param_grad.assign(n_params, 0.0);
        if (cfg.cross_solver != SolverChoice::None) {
            const int o = 1 - d;
            DenseMatrix matched(bs, asg.protos[o].vectors.cols(), 0.0);
            std::vector<std::vector<std::size_t>> negatives(bs);
            for (std::size_t b = 0; b < bs; ++b) {
                const std::size_t idx = indices[b];
                const std::size_t label = asg.cross_labels[d][idx];
                const auto proto_row = asg.protos[o].vectors.row(label);
                auto dst = matched.row(b);
                std::copy(proto_row.begin(), proto_row.end(), dst.begin());
                negatives[b] = asg.cross_negatives[d][idx];
            }
            const LossGrad lg = loss_cross(q, matched, negatives, asg.protos[o].vectors,
                                           cfg.tau);
            l_cr = backprop(lg, st.encoder, cache);
        }

        step_loss = loss_total(l_in, l_cr, cfg.lambda);
        acc.in += l_in.value;
        acc.cr += l_cr.value;
        acc.total += step_loss.value;
    }

    adam_step(st.encoder.params, step_loss.param_grad, st.adam, cfg.learning_rate);
    momentum_update(st.encoder, st.momentum_encoder);
    memory_bank_write(bank, indices, k_rows);
}

}  // namespace

EpochMetrics train_epoch(TrainerState& st, std::size_t epoch_index, std::ostream* log) {
    const auto start = std::chrono::steady_clock::now();
    const bool warm = epoch_index < st.cfg.warmup_epochs;

    EpochAssignments asg;
    if (!warm && (st.cfg.intra_solver != SolverChoice::None ||
                  st.cfg.cross_solver != SolverChoice::None)) {
        asg = compute_assignments(st);
    }

    std::vector<std::size_t> order_a(st.data_a.rows());
    std::vector<std::size_t> order_b(st.data_b.rows());
    std::iota(order_a.begin(), order_a.end(), std::size_t{0});
    std::iota(order_b.begin(), order_b.end(), std::size_t{0});
    st.rng.shuffle(order_a);
    st.rng.shuffle(order_b);
    const auto batches_a = make_batches(std::move(order_a), st.cfg.batch_size);
    const auto batches_b = make_batches(std::move(order_b), st.cfg.batch_size);

    LossAccumulator acc;
    const std::size_t steps = std::max(batches_a.size(), batches_b.size());
    for (std::size_t t = 0; t < steps; ++t) {
        if (t < batches_a.size()) batch_step(st, 0, batches_a[t], warm, asg, acc);
        if (t < batches_b.size()) batch_step(st, 1, batches_b[t], warm, asg, acc);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch_index;
    const double denom = static_cast<double>(st.data_a.rows() + st.data_b.rows());
    metrics.loss_pre = acc.pre / denom;
    metrics.loss_in = acc.in / denom;
    metrics.loss_cr = acc.cr / denom;
    metrics.loss_total = acc.total / denom;

    if (st.eval_labels) {
        const UnitRowMatrix feats_a = encoder_forward(st.encoder, st.data_a);
        const UnitRowMatrix feats_b = encoder_forward(st.encoder, st.data_b);
        const auto rank_ab = rank_retrieval(feats_a, feats_b);
        const auto rank_ba = rank_retrieval(feats_b, feats_a);
        for (std::size_t k : metric_k_values()) {
            if (k > st.data_a.rows() || k > st.data_b.rows()) continue;
            const double ab =
                mean_precision_at_k(rank_ab, st.eval_labels->a, st.eval_labels->b, k);
            const double ba =
                mean_precision_at_k(rank_ba, st.eval_labels->b, st.eval_labels->a, k);
            metrics.p_at_k[k] = 0.5 * (ab + ba);
        }
    }

    // Wall time goes to the diagnostic stream only; metrics records must be
    // byte-identical across reruns of the same seed.
    metrics.wallclock_ms = 0;
    if (log) {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        (*log) << "epoch " << epoch_index << (warm ? " [warmup]" : "") << " loss_pre "
               << metrics.loss_pre << " loss_in " << metrics.loss_in << " loss_cr "
               << metrics.loss_cr;
        if (metrics.p_at_k.count(10)) (*log) << " p@10 " << metrics.p_at_k.at(10);
        (*log) << " (" << elapsed << " ms)\n";
    }
    return metrics;
}

TrainResult run_training(const TrainConfig& cfg, TrainData data,
                         std::optional<EvalLabels> eval_labels, std::ostream* log) {
    TrainerState state(cfg, std::move(data), std::move(eval_labels));
    TrainResult result;
    result.history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        result.history.push_back(train_epoch(state, epoch, log));
    }
    result.model.encoder = state.encoder;
    result.model.momentum_encoder = state.momentum_encoder;
    return result;
}

}  // namespace protoot
