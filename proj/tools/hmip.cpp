// Command-line driver: generate, train, calibrate, bound, evaluate, report.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "hmip/error.hpp"
#include "hmip/pipeline.hpp"

using namespace hmip;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> family;
    std::optional<std::string> loss;
    std::optional<double> nu;
    std::optional<double> omega;
    std::optional<double> alpha;
    std::optional<std::string> convention;
    std::optional<int> jobs;
    std::optional<int> blocks;   // --J
    std::optional<int> items_k;  // --k
    std::optional<int> items_i;  // --I
    std::optional<int> params;   // --p
    bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key = value config file; flags override it");
    cmd->add_option("--seed", f.seed, "family, data and training seed");
    cmd->add_option("--out", f.out, "output root (default data)");
    cmd->add_option("--family", f.family, "knapsack or facility");
    cmd->add_option("--J", f.blocks, "knapsack blocks or facility sites");
    cmd->add_option("--k", f.items_k, "items per knapsack");
    cmd->add_option("--I", f.items_i, "facility clients");
    cmd->add_option("--p", f.params, "parameter dimension");
    cmd->add_option("--jobs", f.jobs, "worker threads for per-instance work");
    cmd->add_flag("-v,--verbose", f.verbose, "log progress");
}

void add_policy(CLI::App* cmd, Flags& f) {
    cmd->add_option("--loss", f.loss, "asl, z, fy, gspo (train also accepts dp)");
    cmd->add_option("--nu", f.nu, "ASL scale");
    cmd->add_option("--omega", f.omega, "FY penalty weight");
}

void add_conformal(CLI::App* cmd, Flags& f) {
    cmd->add_option("--alpha", f.alpha, "target miscoverage");
    cmd->add_option("--convention", f.convention, "corrected or multiplicative");
}

RunConfig resolve(const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (f.family) cfg.set("family", *f.family);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out = *f.out;
    if (f.blocks) cfg.dims.blocks = *f.blocks;
    if (f.items_k) {
        if (cfg.family != FamilyKind::kKnapsack) throw Error(ErrorCode::kInvalidArgument, "--k applies to knapsack");
        cfg.dims.items = *f.items_k;
    }
    if (f.items_i) {
        if (cfg.family != FamilyKind::kFacility) throw Error(ErrorCode::kInvalidArgument, "--I applies to facility");
        cfg.dims.items = *f.items_i;
    }
    if (f.params) cfg.dims.params = *f.params;
    if (f.loss && *f.loss != "dp") cfg.set("loss", *f.loss);
    if (f.nu) cfg.nu = *f.nu;
    if (f.omega) cfg.omega = *f.omega;
    if (f.alpha) cfg.alpha = *f.alpha;
    if (f.convention) cfg.set("convention", *f.convention);
    if (f.jobs) cfg.jobs = *f.jobs;
    cfg.validate();
    return cfg;
}

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kAlphaOutOfRange:
        case ErrorCode::kUncalibrated:
        case ErrorCode::kSearchSpaceTooLarge:
        case ErrorCode::kInsufficientSamples:
        case ErrorCode::kParse:
        case ErrorCode::kIo:
            return kExitUsage;
        default:
            return kExitInternal;
    }
}

void print_file(const std::filesystem::path& path) {
    require_file(path);
    std::ifstream in(path);
    std::cout << path.string() << '\n' << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical MILP heuristics with learned upper-level policies and conformal bounds"};
    app.require_subcommand(1);
    Flags f;
    std::string train_loss = "asl";
    std::string theta_file;
    std::string bound_out;

    auto* gen = app.add_subcommand("generate", "sample and label a dataset, write splits");
    add_common(gen, f);

    auto* train = app.add_subcommand("train", "grid-search a cost predictor (or the dp baseline)");
    add_common(train, f);
    add_policy(train, f);

    auto* cal = app.add_subcommand("calibrate", "train the value predictor and calibrate the bound");
    add_common(cal, f);
    add_policy(cal, f);
    add_conformal(cal, f);

    auto* bound = app.add_subcommand("bound", "certificates for the theta rows of a file");
    add_common(bound, f);
    add_policy(bound, f);
    add_conformal(bound, f);
    bound->add_option("--theta", theta_file, "whitespace-separated theta per line")->required();
    bound->add_option("--output", bound_out, "certificate CSV (default <dir>/bounds.csv)");

    auto* eval = app.add_subcommand("evaluate", "all methods on the test split");
    add_common(eval, f);
    add_policy(eval, f);
    add_conformal(eval, f);

    auto* report = app.add_subcommand("report", "print the evaluation summary and coverage tables");
    add_common(report, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    spdlog::set_level(f.verbose ? spdlog::level::info : spdlog::level::warn);
    try {
        const RunConfig cfg = resolve(f);
        if (*gen) {
            const auto s = run_generate(cfg);
            std::cout << "wrote " << s.samples << " samples to " << cfg.dir().string() << " (" << s.discarded
                      << " discarded)\n";
        } else if (*train) {
            if (f.loss) train_loss = *f.loss;
            const auto s = run_train(cfg, train_loss);
            std::cout << "selected learning rate " << format_number(s.learning_rate) << " (eval regret "
                      << format_number(s.eval_regret) << ")\n";
        } else if (*cal) {
            const auto c = run_calibrate(cfg);
            std::cout << "q_alpha " << format_number(c.q_alpha) << " coverage_target "
                      << format_number(c.coverage_target) << " (M = " << c.m << ", " << to_string(c.convention)
                      << ")\n";
        } else if (*bound) {
            const std::filesystem::path out = bound_out.empty() ? cfg.dir() / "bounds.csv" : std::filesystem::path(bound_out);
            run_bound(cfg, theta_file, out);
            std::cout << "wrote " << out.string() << '\n';
        } else if (*eval) {
            for (const auto& s : run_evaluate(cfg)) {
                std::cout << s.method_id << " r_abs " << format_number(s.r_abs) << " r_norm "
                          << format_number(s.r_norm) << " median_time " << format_number(s.median_time) << '\n';
            }
        } else if (*report) {
            const std::string fam = to_string(cfg.family);
            print_file(cfg.dir() / ("summary_" + fam + ".csv"));
            print_file(cfg.dir() / ("coverage_" + fam + ".csv"));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return 0;
}
