#include "hmip/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "hmip/error.hpp"

namespace hmip {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T v{};
    in >> v;
    std::string rest;
    if (in.fail() || (in >> rest)) throw Error(ErrorCode::kInvalidArgument, "bad value '" + value + "' for " + key);
    return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
    if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty list for " + key);
    return out;
}

nlohmann::json read_json(const std::filesystem::path& path) {
    require_file(path);
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << doc.dump() << '\n';
}

const std::vector<std::string> kLearnedLosses{"asl", "z", "fy"};

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "family") {
        // Dimensions fall back to the desk defaults of the new family.
        const FamilyKind kind = family_kind_from_string(value);
        if (kind != family) dims = FamilyDims::desk(kind);
        family = kind;
    } else if (key == "blocks") {
        dims.blocks = parse_number<int>(key, value);
    } else if (key == "items") {
        dims.items = parse_number<int>(key, value);
    } else if (key == "params") {
        dims.params = parse_number<int>(key, value);
    } else if (key == "seed") {
        seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "total") {
        total = parse_number<int>(key, value);
    } else if (key == "n_train") {
        split.train = parse_number<int>(key, value);
    } else if (key == "n_eval") {
        split.eval = parse_number<int>(key, value);
    } else if (key == "n_calib") {
        split.calib = parse_number<int>(key, value);
    } else if (key == "n_test") {
        split.test = parse_number<int>(key, value);
    } else if (key == "loss") {
        loss = loss_kind_from_string(value);
    } else if (key == "nu") {
        nu = parse_number<double>(key, value);
    } else if (key == "omega") {
        omega = parse_number<double>(key, value);
    } else if (key == "lr") {
        train.lr_grid = {parse_number<double>(key, value)};
    } else if (key == "lr_grid") {
        train.lr_grid = parse_list<double>(key, value);
    } else if (key == "batch_size") {
        train.batch_size = parse_number<int>(key, value);
    } else if (key == "epochs") {
        train.epochs = parse_number<int>(key, value);
    } else if (key == "eval_every") {
        train.eval_every = parse_number<int>(key, value);
    } else if (key == "optimizer") {
        if (value == "sgd") {
            train.optimizer = OptimizerKind::kSgd;
        } else if (value == "momentum") {
            train.optimizer = OptimizerKind::kMomentum;
        } else {
            throw Error(ErrorCode::kInvalidArgument, "optimizer must be sgd or momentum");
        }
    } else if (key == "momentum") {
        train.momentum = parse_number<double>(key, value);
    } else if (key == "hidden") {
        train.hidden = parse_list<int>(key, value);
    } else if (key == "alpha") {
        alpha = parse_number<double>(key, value);
    } else if (key == "convention") {
        convention = conformal_convention_from_string(value);
    } else if (key == "conformal_epochs") {
        conformal.epochs = parse_number<int>(key, value);
    } else if (key == "conformal_lr") {
        conformal.learning_rate = parse_number<double>(key, value);
    } else if (key == "conformal_hidden") {
        conformal.hidden = parse_list<int>(key, value);
    } else if (key == "out") {
        out = value;
    } else if (key == "jobs") {
        jobs = parse_number<int>(key, value);
    } else if (key == "label_time_limit") {
        label_time_limit = parse_number<double>(key, value);
    } else if (key == "eval_time_limit") {
        eval_time_limit = parse_number<double>(key, value);
    } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
}

std::vector<std::string> run_config_keys() {
    return {"family", "blocks",    "items",     "params",     "seed",    "total",   "n_train",
            "n_eval", "n_calib",   "n_test",    "loss",       "nu",      "omega",   "lr",
            "lr_grid", "batch_size", "epochs",  "eval_every", "optimizer", "momentum", "hidden",
            "alpha",  "convention", "conformal_epochs", "conformal_lr", "conformal_hidden", "out", "jobs",
            "label_time_limit", "eval_time_limit"};
}

void RunConfig::validate() const {
    if (dims.blocks <= 0 || dims.items <= 0 || dims.params <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "family dimensions must be positive");
    }
    split.validate();
    if (total < split.total()) {
        throw Error(ErrorCode::kInvalidArgument, "total must cover the split sizes");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kAlphaOutOfRange, "alpha must lie in (0, 1)");
    if (jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
    train_config(loss).validate();
    conformal.validate();
}

std::filesystem::path RunConfig::dir() const { return dataset_dir(out, family, seed); }

LossSpec RunConfig::loss_spec(LossKind kind) const {
    LossSpec s = LossSpec::training(kind);
    s.nu = nu;
    s.omega_weight = omega;
    return s;
}

TrainConfig RunConfig::train_config(LossKind kind) const {
    TrainConfig t = train;
    t.loss = loss_spec(kind);
    t.seed = seed;
    t.jobs = jobs;
    return t;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    require_file(path);
    std::ifstream in(path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::kInvalidArgument,
                        path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "missing input: " + path.string());
}

Workspace load_workspace(const Artifacts& a) {
    Workspace w;
    w.family = HierarchicalFamily::from_json(read_json(a.family()));
    require_file(a.dataset());
    w.dataset = load_dataset(a.dataset());
    require_file(a.splits());
    w.splits = load_splits(a.splits());
    w.train = select(w.dataset, w.splits.train);
    w.eval = select(w.dataset, w.splits.eval);
    w.calib = select(w.dataset, w.splits.calib);
    w.test = select(w.dataset, w.splits.test);
    return w;
}

GenerateSummary run_generate(const RunConfig& cfg) {
    cfg.validate();
    const Artifacts a{cfg.dir()};
    std::filesystem::create_directories(a.dir);
    auto family = generate_family(cfg.family, cfg.dims, cfg.seed);
    write_json(family->to_json(), a.family());
    SolveConfig label = labeling_config();
    label.time_limit = cfg.label_time_limit;
    Dataset ds = generate_dataset(*family, cfg.total, cfg.seed, label, cfg.jobs);
    for (const auto& s : ds.samples) check_sample(*family, s);
    save_dataset(ds, a.dataset());
    SplitSpec spec = cfg.split;
    spec.seed = cfg.seed;
    save_splits(split(ds, spec), a.splits());
    spdlog::info("generated {} samples in {}", ds.samples.size(), a.dir.string());
    return {static_cast<int>(ds.samples.size()), ds.discarded};
}

void save_predictor(const StoredPredictor& p, const std::filesystem::path& path) {
    const nlohmann::json doc = {{"name", p.name},
                                {"loss", to_string(p.spec.kind)},
                                {"nu", p.spec.nu},
                                {"omega", p.spec.omega_weight},
                                {"learning_rate", p.learning_rate},
                                {"network", p.model.to_json()}};
    write_json(doc, path);
}

StoredPredictor load_predictor(const std::filesystem::path& path) {
    const auto doc = read_json(path);
    try {
        StoredPredictor p;
        p.name = doc.at("name").get<std::string>();
        p.spec.kind = loss_kind_from_string(doc.at("loss").get<std::string>());
        p.spec.nu = doc.at("nu").get<double>();
        p.spec.omega_weight = doc.at("omega").get<double>();
        p.learning_rate = doc.at("learning_rate").get<double>();
        p.model = Mlp::from_json(doc.at("network"));
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
}

Decider make_decider(const HierarchicalFamily& family, const StoredPredictor& p) {
    if (p.name == "dp") {
        return [&family, model = p.model](std::span<const double> theta) {
            const Eigen::VectorXd out = model.forward(theta);
            return project_onto_upper(family, theta, std::span<const double>(out.data(), out.size()));
        };
    }
    return [&family, model = p.model, spec = p.spec](std::span<const double> theta) {
        const Eigen::VectorXd out = model.forward(theta);
        return solve_policy(family, theta, std::span<const double>(out.data(), out.size()), spec);
    };
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << "step,train_loss,eval_regret,best_eval_regret,wall_time\n";
    for (const auto& c : curve) {
        out << c.step << ',' << format_number(c.train_loss) << ',' << format_number(c.eval_regret) << ','
            << format_number(c.best_eval_regret) << ',' << format_number(c.wall_time) << '\n';
    }
}

TrainSummary run_train(const RunConfig& cfg, const std::string& loss) {
    cfg.validate();
    // Both families have one upper variable per block.
    if (loss == "gspo" && (std::uint64_t{1} << std::min(cfg.dims.blocks, 63)) > kGspoGuard) {
        throw Error(ErrorCode::kSearchSpaceTooLarge,
                    "gspo enumerates X(theta) and is limited to 16 upper variables; this family has " +
                        std::to_string(cfg.dims.blocks));
    }
    const Artifacts a{cfg.dir()};
    Workspace w = load_workspace(a);
    StoredPredictor stored;
    stored.name = loss;
    GridSearchResult result;
    if (loss == "dp") {
        TrainConfig tc = cfg.train_config(LossKind::kZero);
        result = direct_prediction_train(*w.family, w.train, w.eval, tc);
        stored.spec = tc.loss;
    } else {
        const LossKind kind = loss_kind_from_string(loss);
        TrainConfig tc = cfg.train_config(kind);
        const SurrogateObjective objective(*w.family, tc.loss);
        result = grid_search(*w.family, w.train, w.eval, tc, objective);
        stored.spec = tc.loss;
    }
    stored.model = result.best.model;
    stored.learning_rate = result.best_config.learning_rate;
    save_predictor(stored, a.model(loss));
    write_curve_csv(result.best.curve, a.curve(loss));
    spdlog::info("{}: selected lr {}, eval regret {}", loss, stored.learning_rate, result.best.eval_regret);
    return {loss, stored.learning_rate, result.best.eval_regret};
}

Calibration run_calibrate(const RunConfig& cfg) {
    cfg.validate();
    const Artifacts a{cfg.dir()};
    Workspace w = load_workspace(a);
    const StoredPredictor pred = load_predictor(a.model(to_string(cfg.loss)));
    const Decider decide = make_decider(*w.family, pred);
    ConformalTrainConfig ct = cfg.conformal;
    ct.seed = cfg.seed;
    ConformalModel model =
        train_conformal(w.eval, run_policy_all(*w.family, decide, w.eval, cfg.jobs), ct);
    Calibration c = calibrate(model, w.calib, run_policy_all(*w.family, decide, w.calib, cfg.jobs), cfg.alpha,
                              cfg.convention);
    write_json(model.to_json(), a.conformal_model());
    save_calibration(c, a.calibration(cfg.convention));
    return c;
}

namespace {

ConformalModel load_calibrated(const Artifacts& a, ConformalConvention convention) {
    ConformalModel model = ConformalModel::from_json(read_json(a.conformal_model()));
    const auto cal_path = a.calibration(convention);
    if (!std::filesystem::exists(cal_path)) {
        throw Error(ErrorCode::kUncalibrated, "no calibration artifact at " + cal_path.string() + "; run calibrate");
    }
    model.set_calibration(load_calibration(cal_path));
    return model;
}

}  // namespace

void run_bound(const RunConfig& cfg, const std::filesystem::path& theta_file, const std::filesystem::path& out_csv) {
    const Artifacts a{cfg.dir()};
    const auto family = HierarchicalFamily::from_json(read_json(a.family()));
    const StoredPredictor pred = load_predictor(a.model(to_string(cfg.loss)));
    const ConformalModel model = load_calibrated(a, cfg.convention);
    require_file(theta_file);
    std::ifstream in(theta_file);
    std::vector<int> ids;
    std::vector<BoundCertificate> certs;
    std::string line;
    const Decider decide = make_decider(*family, pred);
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::vector<double> theta;
        double v;
        while (fields >> v) theta.push_back(v);
        if (theta.empty()) continue;
        if (!fields.eof()) throw Error(ErrorCode::kParse, theta_file.string() + ": bad number");
        certs.push_back(online_bound(model, *family, decide, theta));
        ids.push_back(static_cast<int>(ids.size()));
    }
    write_certificates_csv(ids, certs, {}, out_csv);
}

std::vector<std::string> evaluation_outputs(const RunConfig& cfg) {
    const std::string fam = to_string(cfg.family);
    std::vector<std::string> out;
    for (const std::string m : {"NN", "DP", "EXACT", "FEAS-1", "FEAS-3", "ASL", "Z", "FY"}) {
        out.push_back("results_" + fam + "_" + m + ".csv");
    }
    for (const std::string m : {"EXACT", "FEAS-1", "FEAS-3"}) out.push_back("trajectory_" + fam + "_" + m + ".csv");
    out.push_back("summary_" + fam + ".csv");
    out.push_back("certificates_" + fam + ".csv");
    out.push_back("coverage_" + fam + ".csv");
    return out;
}

std::vector<MethodSummary> run_evaluate(const RunConfig& cfg) {
    cfg.validate();
    const Artifacts a{cfg.dir()};
    Workspace w = load_workspace(a);
    const auto& fam = *w.family;
    const std::string fam_name = to_string(cfg.family);

    // Every artifact is checked before the first solve.
    std::vector<std::string> learned{"dp"};
    learned.insert(learned.end(), kLearnedLosses.begin(), kLearnedLosses.end());
    for (const auto& name : learned) require_file(a.model(name));
    require_file(a.conformal_model());
    const ConformalModel conformal = load_calibrated(a, cfg.convention);

    const std::vector<double> f_star = label_true_costs(fam, w.test, cfg.jobs);
    std::vector<MethodResult> results;

    results.push_back(run_hierarchical("NN", fam, w.test, f_star, [&](std::span<const double> theta, double& t) {
        const auto start = std::chrono::steady_clock::now();
        auto x = nearest_neighbor_predict(w.train, fam, theta);
        t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return x;
    }));
    for (const auto& name : learned) {
        const StoredPredictor p = load_predictor(a.model(name));
        const Decider decide = make_decider(fam, p);
        results.push_back(run_hierarchical(upper(name), fam, w.test, f_star,
                                           [&](std::span<const double> theta, double& t) {
                                               const auto start = std::chrono::steady_clock::now();
                                               auto x = decide(theta);
                                               t = std::chrono::duration<double>(
                                                       std::chrono::steady_clock::now() - start)
                                                       .count();
                                               return x;
                                           }));
    }
    results.push_back(run_master("EXACT", fam, w.test, f_star, exact_config(cfg.eval_time_limit)));
    results.push_back(run_master("FEAS-1", fam, w.test, f_star, first_feasible_config(1, cfg.eval_time_limit)));
    results.push_back(run_master("FEAS-3", fam, w.test, f_star, first_feasible_config(3, cfg.eval_time_limit)));

    std::vector<MethodSummary> summaries;
    for (const auto& r : results) {
        write_results_csv(r, a.dir / ("results_" + fam_name + "_" + r.method_id + ".csv"));
        if (!r.trajectory.empty() || r.method_id.rfind("FEAS", 0) == 0 || r.method_id == "EXACT") {
            write_trajectory_csv(r, a.dir / ("trajectory_" + fam_name + "_" + r.method_id + ".csv"));
        }
        summaries.push_back(compute_metrics(r));
    }
    write_summary_csv(summaries, a.dir / ("summary_" + fam_name + ".csv"));

    // Conformal bounds for the configured policy on the test split.
    const StoredPredictor pred = load_predictor(a.model(to_string(cfg.loss)));
    const auto outcomes = run_policy_all(fam, make_decider(fam, pred), w.test, cfg.jobs);
    std::vector<int> ids;
    std::vector<BoundCertificate> certs;
    std::vector<double> z, l, omega, rel;
    for (std::size_t i = 0; i < w.test.size(); ++i) {
        certs.push_back(certify(conformal, outcomes[i]));
        ids.push_back(w.test[i].theta_id);
        z.push_back(w.test[i].z);
        l.push_back(certs.back().l);
        omega.push_back(certs.back().omega);
    }
    write_certificates_csv(ids, certs, z, a.dir / ("certificates_" + fam_name + ".csv"));
    const CoverageReport cov = coverage_eval(z, l, omega);
    const CoverageReport rel_cov = coverage_eval(z, l, l);
    {
        std::ofstream out(a.dir / ("coverage_" + fam_name + ".csv"), std::ios::binary);
        out << "bound,alpha,convention,q_alpha,coverage_target,r_rel_plus,r_rel_minus,r_percent,empirical_coverage,"
               "r_rel_plus_valid,evaluated,skipped\n";
        const Calibration& c = conformal.calibration();
        auto row = [&](const char* name, const CoverageReport& r) {
            out << name << ',' << format_number(c.alpha) << ',' << to_string(c.convention) << ','
                << format_number(c.q_alpha) << ',' << format_number(c.coverage_target) << ','
                << format_number(r.r_rel_plus) << ',' << format_number(r.r_rel_minus) << ','
                << format_number(r.r_percent) << ',' << format_number(r.empirical_coverage) << ','
                << format_number(r.r_rel_plus_valid) << ',' << r.evaluated << ',' << r.skipped << '\n';
        };
        row("conformal", cov);
        row("relaxation", rel_cov);
    }
    return summaries;
}

}  // namespace hmip
