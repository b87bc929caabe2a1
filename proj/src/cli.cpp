#include "protoot/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoot/errors.hpp"
#include "protoot/eval.hpp"
#include "protoot/feature_io.hpp"
#include "protoot/synthetic.hpp"
#include "protoot/trainer.hpp"

namespace protoot {

namespace {

namespace fs = std::filesystem;

// Mirrors of the TrainConfig keys as CLI flags; flags override config values.
struct ConfigFlags {
    TrainConfig values;
    std::string sinkhorn_mode_text = values.sinkhorn_mode.to_string();
    std::string intra_text = solver_choice_name(values.intra_solver);
    std::string cross_text = solver_choice_name(values.cross_solver);
    std::vector<CLI::Option*> options;

    CLI::Option* track(CLI::Option* opt) {
        options.push_back(opt);
        return opt;
    }

    void add_to(CLI::App& cmd, bool with_solvers) {
        track(cmd.add_option("--epochs", values.epochs, "Total training epochs"));
        track(cmd.add_option("--warmup-epochs", values.warmup_epochs,
                             "Epochs trained with the pretraining loss only"));
        track(cmd.add_option("--batch-size", values.batch_size, "Samples per batch (>= 2)"));
        track(cmd.add_option("--learning-rate", values.learning_rate, "Adam learning rate"));
        track(cmd.add_option("--lambda", values.lambda, "Weight of the cross-domain loss"));
        track(cmd.add_option("--tau", values.tau, "Contrastive temperature"));
        track(cmd.add_option("--momentum", values.momentum, "Momentum-encoder decay"));
        track(cmd.add_option("--epsilon", values.epsilon, "Entropic regularization"));
        track(cmd.add_option("--sinkhorn-mode", sinkhorn_mode_text,
                             "fixed:<n> or tol:<tol>:<max_iter>")
                  ->check([](const std::string& text) -> std::string {
                      try {
                          SinkhornMode::parse(text);
                      } catch (const Error& e) {
                          return e.what();
                      }
                      return {};
                  }));
        track(cmd.add_option("--k", values.k, "Prototype count"));
        track(cmd.add_option("--seed", values.seed, "Master seed"));
        if (with_solvers) {
            const std::vector<std::string> names = {"sot", "protoot", "uot", "pot", "none"};
            track(cmd.add_option("--intra-solver", intra_text, "Intra-domain assignment solver")
                      ->check(CLI::IsMember(names)));
            track(cmd.add_option("--cross-solver", cross_text, "Cross-domain assignment solver")
                      ->check(CLI::IsMember(names)));
        }
        track(cmd.add_option("--uot-kl-strength", values.uot_kl_strength,
                             "Marginal KL weight for the uot solver"));
        track(cmd.add_option("--pot-mass-fraction", values.pot_mass_fraction,
                             "Transported fraction for the pot solver"));
    }

    // Start from `base` (config-file values), then apply every flag the user
    // actually passed.
    TrainConfig resolve(const TrainConfig& base) const {
        TrainConfig cfg = base;
        for (const CLI::Option* opt : options) {
            if (opt->count() == 0) continue;
            const std::string name = opt->get_name();
            if (name == "--epochs") cfg.epochs = values.epochs;
            else if (name == "--warmup-epochs") cfg.warmup_epochs = values.warmup_epochs;
            else if (name == "--batch-size") cfg.batch_size = values.batch_size;
            else if (name == "--learning-rate") cfg.learning_rate = values.learning_rate;
            else if (name == "--lambda") cfg.lambda = values.lambda;
            else if (name == "--tau") cfg.tau = values.tau;
            else if (name == "--momentum") cfg.momentum = values.momentum;
            else if (name == "--epsilon") cfg.epsilon = values.epsilon;
            else if (name == "--sinkhorn-mode")
                cfg.sinkhorn_mode = SinkhornMode::parse(sinkhorn_mode_text);
            else if (name == "--k") cfg.k = values.k;
            else if (name == "--seed") cfg.seed = values.seed;
            else if (name == "--intra-solver") cfg.intra_solver = parse_solver_choice(intra_text);
            else if (name == "--cross-solver") cfg.cross_solver = parse_solver_choice(cross_text);
            else if (name == "--uot-kl-strength") cfg.uot_kl_strength = values.uot_kl_strength;
            else if (name == "--pot-mass-fraction")
                cfg.pot_mass_fraction = values.pot_mass_fraction;
        }
        cfg.validate();
        return cfg;
    }
};

struct LoadedData {
    TrainData features;
    std::optional<EvalLabels> labels;
};

LoadedData load_domain_pair(const fs::path& path_a, const fs::path& path_b) {
    FeatureFile a = load_features(path_a);
    FeatureFile b = load_features(path_b);
    if (a.features.cols() != b.features.cols()) {
        throw DimMismatchError("domain feature files disagree on dimension");
    }
    LoadedData out;
    out.features.a = a.features.matrix();
    out.features.b = b.features.matrix();
    if (a.labels && b.labels) out.labels = EvalLabels{std::move(*a.labels), std::move(*b.labels)};
    return out;
}

TrainConfig base_config(const std::string& config_path) {
    if (config_path.empty()) return TrainConfig{};
    return load_config(config_path);
}

int run_one_training(const TrainConfig& cfg, const LoadedData& data, const fs::path& metrics_path,
                     const fs::path& model_path, std::ostream* log) {
    TrainData features{data.features.a, data.features.b};
    const TrainResult result = run_training(cfg, std::move(features), data.labels, log);
    save_metrics(metrics_path, result.history);
    save_model(model_path, result.model);
    return 0;
}

// ---- gen-data ----------------------------------------------------------

struct GenDataArgs {
    SyntheticSpec spec;
    std::vector<std::size_t> counts;
    std::string out_dir;
};

void setup_gen_data(CLI::App& cmd, GenDataArgs& args) {
    cmd.add_option("--out", args.out_dir, "Output directory")->required();
    cmd.add_option("--classes", args.spec.classes, "Number of classes");
    cmd.add_option("--dim", args.spec.dim, "Feature dimension");
    cmd.add_option("--samples", args.spec.samples, "Samples per domain");
    cmd.add_option("--zipf", args.spec.zipf_exponent, "Zipf exponent of class counts");
    cmd.add_option("--counts", args.counts, "Explicit per-class counts (overrides --zipf)")
        ->delimiter(',');
    cmd.add_option("--noise", args.spec.noise_sigma, "Per-coordinate sample noise");
    cmd.add_option("--rotation", args.spec.rotation_strength, "Domain-shift rotation strength");
    cmd.add_option("--offset", args.spec.offset_scale, "Per-class offset scale");
    cmd.add_option("--min-angle", args.spec.min_angle_deg, "Minimum angle between class means");
    cmd.add_option("--seed", args.spec.seed, "Generator seed");
}

int cmd_gen_data(GenDataArgs& args) {
    args.spec.class_counts = args.counts;
    const SyntheticPair pair = generate_synthetic_domains(args.spec);
    fs::create_directories(args.out_dir);
    save_features(fs::path(args.out_dir) / "domain_a.feat", pair.a.features, &pair.a.labels);
    save_features(fs::path(args.out_dir) / "domain_b.feat", pair.b.features, &pair.b.labels);
    std::cerr << "wrote " << args.out_dir << "/domain_a.feat and domain_b.feat ("
              << pair.a.features.rows() << " + " << pair.b.features.rows() << " samples, dim "
              << pair.a.features.cols() << ")\n";
    return 0;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::string data_a;
    std::string data_b;
    std::string metrics_out = "metrics.jsonl";
    std::string model_out = "model.txt";
    bool quiet = false;
    ConfigFlags flags;
};

void setup_train(CLI::App& cmd, TrainArgs& args) {
    cmd.add_option("--config", args.config_path, "Config file (key=value lines)");
    cmd.add_option("--data-a", args.data_a, "Domain A feature file")->required();
    cmd.add_option("--data-b", args.data_b, "Domain B feature file")->required();
    cmd.add_option("--metrics-out", args.metrics_out, "Metrics output file (JSON lines)");
    cmd.add_option("--model-out", args.model_out, "Model output file");
    cmd.add_flag("--quiet", args.quiet, "Suppress per-epoch progress on stderr");
    args.flags.add_to(cmd, /*with_solvers=*/true);
}

int cmd_train(TrainArgs& args) {
    const TrainConfig cfg = args.flags.resolve(base_config(args.config_path));
    const LoadedData data = load_domain_pair(args.data_a, args.data_b);
    return run_one_training(cfg, data, args.metrics_out, args.model_out,
                            args.quiet ? nullptr : &std::cerr);
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
    std::string model_path;
    std::string data_a;
    std::string data_b;
    std::vector<std::size_t> ks = {1, 5, 10, 15};
    bool exclude_self = true;
    std::string out_path;
};

void setup_eval(CLI::App& cmd, EvalArgs& args) {
    cmd.add_option("--model", args.model_path, "Trained model file")->required();
    cmd.add_option("--data-a", args.data_a, "Query/gallery feature file (with labels)")
        ->required();
    cmd.add_option("--data-b", args.data_b, "Gallery/query feature file (with labels)")
        ->required();
    cmd.add_option("--k", args.ks, "Precision cutoffs")->delimiter(',');
    cmd.add_flag("--exclude-self,!--include-self", args.exclude_self,
                 "Drop a query's own gallery entry when both files are identical (default on)");
    cmd.add_option("--out", args.out_path, "Optional JSON-lines report file");
}

int cmd_eval(EvalArgs& args) {
    const TrainedModel model = load_model(args.model_path);
    const FeatureFile a = load_features(args.data_a);
    const FeatureFile b = load_features(args.data_b);
    if (!a.labels || !b.labels) {
        throw ParseError("eval needs labeled feature files (has_labels=1)", 1, 1);
    }
    const UnitRowMatrix feats_a = encoder_forward(model.encoder, a.features.matrix());
    const UnitRowMatrix feats_b = encoder_forward(model.encoder, b.features.matrix());

    // Self-exclusion applies only when the two files carry the same features.
    const bool same = a.features.rows() == b.features.rows() &&
                      a.features.matrix().data() == b.features.matrix().data();
    const bool exclude = args.exclude_self && same;

    const auto rank_ab = rank_retrieval(feats_a, feats_b);
    const auto rank_ba = rank_retrieval(feats_b, feats_a);
    const std::size_t gallery_floor = exclude ? 1 : 0;

    nlohmann::ordered_json report = nlohmann::ordered_json::array();
    auto one_direction = [&](const char* name, const auto& rankings,
                             const std::vector<int>& q_labels,
                             const std::vector<int>& g_labels) {
        nlohmann::ordered_json rec;
        rec["direction"] = name;
        nlohmann::ordered_json pk = nlohmann::ordered_json::object();
        for (std::size_t k : args.ks) {
            if (k + gallery_floor > g_labels.size()) {
                throw KTooLargeError("eval: k = " + std::to_string(k) +
                                     " exceeds the usable gallery size");
            }
            pk[std::to_string(k)] = mean_precision_at_k(rankings, q_labels, g_labels, k, exclude);
        }
        rec["p_at_k"] = std::move(pk);
        report.push_back(std::move(rec));
    };
    one_direction("a_to_b", rank_ab, *a.labels, *b.labels);
    one_direction("b_to_a", rank_ba, *b.labels, *a.labels);

    nlohmann::ordered_json mean_rec;
    mean_rec["direction"] = "mean";
    nlohmann::ordered_json mean_pk = nlohmann::ordered_json::object();
    for (std::size_t k : args.ks) {
        const std::string key = std::to_string(k);
        mean_pk[key] = 0.5 * (report[0]["p_at_k"][key].get<double>() +
                              report[1]["p_at_k"][key].get<double>());
    }
    mean_rec["p_at_k"] = std::move(mean_pk);
    report.push_back(std::move(mean_rec));

    std::ostringstream lines;
    for (const auto& rec : report) lines << rec.dump() << '\n';
    std::cout << lines.str();
    if (!args.out_path.empty()) {
        std::ofstream out(args.out_path);
        if (!out) throw IoError("eval: cannot open " + args.out_path);
        out << lines.str();
    }
    return 0;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
    std::string grid = "sot,protoot x none,sot,protoot";
    std::string config_path;
    std::string data_a;
    std::string data_b;
    std::string out_dir;
    bool parallel = false;
    ConfigFlags flags;
};

void setup_ablate(CLI::App& cmd, AblateArgs& args) {
    cmd.add_option("--grid", args.grid, "'<intra list> x <cross list>' grid specification");
    cmd.add_option("--config", args.config_path, "Base config file");
    cmd.add_option("--data-a", args.data_a, "Domain A feature file")->required();
    cmd.add_option("--data-b", args.data_b, "Domain B feature file")->required();
    cmd.add_option("--out", args.out_dir, "Output directory")->required();
    cmd.add_flag("--parallel", args.parallel, "Run grid cells in parallel threads");
    args.flags.add_to(cmd, /*with_solvers=*/false);
}

std::vector<SolverChoice> parse_solver_list(const std::string& text) {
    std::vector<SolverChoice> out;
    std::string token;
    std::istringstream stream(text);
    while (std::getline(stream, token, ',')) {
        token = CLI::detail::trim_copy(token);
        if (token.empty()) continue;
        const SolverChoice choice = parse_solver_choice(token);
        if (std::find(out.begin(), out.end(), choice) == out.end()) out.push_back(choice);
    }
    if (out.empty()) throw ParseError("empty solver list in grid '" + text + "'", 1, 1);
    return out;
}

int cmd_ablate(AblateArgs& args) {
    const std::size_t split = args.grid.find('x');
    if (split == std::string::npos) {
        throw ParseError("grid must look like 'sot,protoot x none,sot,protoot'", 1, 1);
    }
    const auto intra_list = parse_solver_list(args.grid.substr(0, split));
    const auto cross_list = parse_solver_list(args.grid.substr(split + 1));

    const TrainConfig base = args.flags.resolve(base_config(args.config_path));
    const LoadedData data = load_domain_pair(args.data_a, args.data_b);
    fs::create_directories(args.out_dir);

    struct Cell {
        TrainConfig cfg;
        std::string name;
        fs::path metrics;
        fs::path model;
    };
    std::vector<Cell> cells;
    for (SolverChoice intra : intra_list) {
        for (SolverChoice cross : cross_list) {
            Cell cell;
            cell.cfg = base;
            cell.cfg.intra_solver = intra;
            cell.cfg.cross_solver = cross;
            cell.name = solver_choice_name(intra) + "_" + solver_choice_name(cross);
            cell.metrics = fs::path(args.out_dir) / (cell.name + ".metrics.jsonl");
            cell.model = fs::path(args.out_dir) / (cell.name + ".model.txt");
            cells.push_back(std::move(cell));
        }
    }

    auto run_cell = [&data](const Cell& cell) {
        run_one_training(cell.cfg, data, cell.metrics, cell.model, nullptr);
        save_config(cell.metrics.parent_path() / (cell.name + ".config"), cell.cfg);
    };
    if (args.parallel) {
        std::vector<std::future<void>> futures;
        futures.reserve(cells.size());
        for (const Cell& cell : cells) {
            futures.push_back(std::async(std::launch::async, run_cell, std::cref(cell)));
        }
        for (auto& f : futures) f.get();
    } else {
        for (const Cell& cell : cells) {
            std::cerr << "ablate: running " << cell.name << "\n";
            run_cell(cell);
        }
    }

    // Summary ranked by the final-epoch P@k (largest k shared by all runs,
    // preferring 10).
    struct RowOut {
        std::string intra;
        std::string cross;
        std::map<std::size_t, double> p_at_k;
    };
    std::vector<RowOut> rows;
    for (const Cell& cell : cells) {
        const auto history = load_metrics(cell.metrics);
        RowOut row;
        row.intra = solver_choice_name(cell.cfg.intra_solver);
        row.cross = solver_choice_name(cell.cfg.cross_solver);
        if (!history.empty()) row.p_at_k = history.back().p_at_k;
        rows.push_back(std::move(row));
    }
    std::size_t rank_k = 0;
    for (std::size_t candidate : {std::size_t{10}, std::size_t{15}, std::size_t{5},
                                  std::size_t{1}}) {
        const bool everywhere = std::all_of(rows.begin(), rows.end(), [&](const RowOut& r) {
            return r.p_at_k.count(candidate) > 0;
        });
        if (everywhere) {
            rank_k = candidate;
            break;
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const RowOut& x, const RowOut& y) {
        const double px = rank_k && x.p_at_k.count(rank_k) ? x.p_at_k.at(rank_k) : 0.0;
        const double py = rank_k && y.p_at_k.count(rank_k) ? y.p_at_k.at(rank_k) : 0.0;
        if (px != py) return px > py;
        if (x.intra != y.intra) return x.intra < y.intra;
        return x.cross < y.cross;
    });

    std::ofstream summary(fs::path(args.out_dir) / "summary.txt");
    if (!summary) throw IoError("ablate: cannot open summary.txt");
    summary << "intra cross";
    for (std::size_t k : metric_k_values()) summary << " p@" << k;
    summary << '\n';
    for (const RowOut& row : rows) {
        summary << row.intra << ' ' << row.cross;
        for (std::size_t k : metric_k_values()) {
            summary << ' ';
            if (row.p_at_k.count(k)) {
                summary << format_double(row.p_at_k.at(k));
            } else {
                summary << "n/a";
            }
        }
        summary << '\n';
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Unsupervised cross-domain retrieval via entropic optimal transport with "
                 "cluster-derived marginals"};
    app.name("protoot");
    app.require_subcommand(1);

    GenDataArgs gen_args;
    TrainArgs train_args;
    EvalArgs eval_args;
    AblateArgs ablate_args;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic two-domain benchmark");
    setup_gen_data(*gen, gen_args);
    CLI::App* train = app.add_subcommand("train", "Train on two feature files");
    setup_train(*train, train_args);
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score cross-domain retrieval for a model");
    setup_eval(*eval_cmd, eval_args);
    CLI::App* ablate = app.add_subcommand("ablate", "Run an intra x cross solver grid");
    setup_ablate(*ablate, ablate_args);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (train->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (ablate->parsed()) return cmd_ablate(ablate_args);
        std::cerr << "protoot: no command given\n";
        return 1;
    } catch (const NonFiniteKernelError& e) {
        std::cerr << "protoot: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const NoConvergenceError& e) {
        std::cerr << "protoot: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "protoot: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "protoot: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace protoot
