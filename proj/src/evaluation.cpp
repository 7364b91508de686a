#include "hmip/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "hmip/error.hpp"
#include "hmip/parallel.hpp"

namespace hmip {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    return out;
}

std::string bits(const std::vector<double>& x) {
    std::string s;
    for (double v : x) s += v > 0.5 ? '1' : '0';
    return s;
}

void fill_regret(MethodRow& row, double f_star) {
    row.regret = row.true_cost - f_star;
    row.normalized_regret = std::abs(f_star) < 1e-9 ? std::numeric_limits<double>::quiet_NaN()
                                                    : row.regret / std::abs(f_star);
}

}  // namespace

std::string format_number(double v) {
    if (v == 0.0) v = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> project_onto_upper(const HierarchicalFamily& family, std::span<const double> theta,
                                       std::span<const double> target) {
    if (static_cast<int>(target.size()) != family.upper_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "projection target has the wrong dimension");
    }
    MilpProblem p = family.upper_feasible_set(theta);
    for (int j = 0; j < p.num_vars(); ++j) p.objective[j] = 1.0 - 2.0 * target[j];
    const MilpSolution sol = solve_milp(p, SolveConfig::exact());
    if (!sol.has_values()) throw Error(ErrorCode::kInternal, std::string("projection ") + to_string(sol.status));
    std::vector<double> x = sol.values;
    for (double& v : x) v = std::round(v);
    return x;
}

std::vector<double> nearest_neighbor_predict(const std::vector<LabeledSample>& train_set,
                                             const HierarchicalFamily& family, std::span<const double> theta) {
    if (train_set.empty()) throw Error(ErrorCode::kEmptyTrainSet, "nearest neighbor needs training samples");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const auto& t = train_set[i].theta;
        if (t.size() != theta.size()) throw Error(ErrorCode::kDimensionMismatch, "theta dimension mismatch");
        double d = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k) d += (t[k] - theta[k]) * (t[k] - theta[k]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return project_onto_upper(family, theta, train_set[best].x_star);
}

double DirectObjective::loss_and_gradient(const LabeledSample& sample, const Eigen::VectorXd& output,
                                          std::vector<double>& gradient) const {
    if (output.size() != static_cast<Eigen::Index>(sample.x_star.size())) {
        throw Error(ErrorCode::kDimensionMismatch, "prediction and label sizes differ");
    }
    gradient.resize(sample.x_star.size());
    double loss = 0.0;
    for (std::size_t j = 0; j < gradient.size(); ++j) {
        const double r = output[static_cast<Eigen::Index>(j)] - sample.x_star[j];
        loss += r * r;
        gradient[j] = 2.0 * r;
    }
    return loss;
}

std::vector<double> DirectObjective::decide(std::span<const double> theta, const Eigen::VectorXd& output) const {
    return project_onto_upper(family_, theta, std::span<const double>(output.data(), output.size()));
}

GridSearchResult direct_prediction_train(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                                         const std::vector<LabeledSample>& eval_set, const TrainConfig& config) {
    const DirectObjective objective(family);
    return grid_search(family, train_set, eval_set, config, objective);
}

std::vector<double> label_true_costs(const HierarchicalFamily& family, const std::vector<LabeledSample>& set,
                                     int jobs) {
    std::vector<double> out(set.size());
    parallel_for(static_cast<int>(set.size()), jobs,
                 [&](int i) { out[i] = family.true_cost(set[i].theta, set[i].x_star); });
    return out;
}

MethodResult run_hierarchical(const std::string& method_id, const HierarchicalFamily& family,
                              const std::vector<LabeledSample>& test_set, const std::vector<double>& f_star,
                              const UpperMethod& method) {
    if (f_star.size() != test_set.size()) throw Error(ErrorCode::kMissingLabels, "f_star missing for test samples");
    MethodResult result;
    result.method_id = method_id;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& s = test_set[i];
        MethodRow row;
        row.theta_id = s.theta_id;
        row.x_hat = method(s.theta, row.wall_time_upper);
        family.check_upper_feasible(s.theta, row.x_hat);
        row.feasible = true;
        const LowerSolution low = family.solve_lower(s.theta, row.x_hat);
        row.wall_time_lower = std::accumulate(low.block_times.begin(), low.block_times.end(), 0.0);
        row.wall_time_total = row.wall_time_upper + row.wall_time_lower;
        const auto c = family.upper_cost(s.theta);
        row.true_cost = low.cost;
        for (std::size_t j = 0; j < c.size(); ++j) row.true_cost += c[j] * row.x_hat[j];
        fill_regret(row, f_star[i]);
        result.rows.push_back(std::move(row));
    }
    return result;
}

SolveConfig exact_config(double time_limit) {
    SolveConfig c;
    c.gap_tolerance = 1e-4;
    c.time_limit = time_limit;
    return c;
}

SolveConfig first_feasible_config(int incumbents, double time_limit) {
    SolveConfig c = exact_config(time_limit);
    c.stop_after_incumbents = incumbents;
    return c;
}

MethodResult run_master(const std::string& method_id, const HierarchicalFamily& family,
                        const std::vector<LabeledSample>& test_set, const std::vector<double>& f_star,
                        const SolveConfig& config) {
    if (f_star.size() != test_set.size()) throw Error(ErrorCode::kMissingLabels, "f_star missing for test samples");
    MethodResult result;
    result.method_id = method_id;
    const int n1 = family.upper_dim();
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& s = test_set[i];
        const MilpProblem master = family.build_master(s.theta);
        const auto start = Clock::now();
        const MilpSolution sol = solve_milp(master, config);
        const double elapsed = seconds_since(start);
        if (!sol.has_values()) {
            throw Error(ErrorCode::kInternal, method_id + ": no incumbent for theta " + std::to_string(s.theta_id));
        }
        MethodRow row;
        row.theta_id = s.theta_id;
        row.x_hat.assign(sol.values.begin(), sol.values.begin() + n1);
        for (double& v : row.x_hat) v = std::round(v);
        family.check_upper_feasible(s.theta, row.x_hat);
        row.feasible = true;
        row.wall_time_upper = elapsed;
        row.wall_time_total = elapsed;
        row.true_cost = family.true_cost(s.theta, row.x_hat);
        fill_regret(row, f_star[i]);
        result.rows.push_back(std::move(row));
        for (const auto& ev : sol.incumbents) result.trajectory.push_back({s.theta_id, ev.time_s, ev.objective});
    }
    return result;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MethodSummary compute_metrics(const MethodResult& result) {
    if (result.rows.empty()) throw Error(ErrorCode::kMissingLabels, "no rows for method " + result.method_id);
    MethodSummary s;
    s.method_id = result.method_id;
    s.instances = static_cast<int>(result.rows.size());
    double norm_sum = 0.0;
    int norm_count = 0;
    std::vector<double> totals;
    for (const auto& r : result.rows) {
        if (!std::isfinite(r.regret)) throw Error(ErrorCode::kMissingLabels, "row without a regret value");
        s.r_abs += r.regret;
        if (std::isnan(r.normalized_regret)) {
            ++s.norm_skipped;
            spdlog::info("{}: theta {} skipped in normalized regret (|f*| < 1e-9)", result.method_id, r.theta_id);
        } else {
            norm_sum += r.normalized_regret;
            ++norm_count;
        }
        s.mean_time += r.wall_time_total;
        s.mean_time_upper += r.wall_time_upper;
        s.mean_time_lower += r.wall_time_lower;
        totals.push_back(r.wall_time_total);
    }
    const double n = s.instances;
    s.r_abs /= n;
    s.r_norm = norm_count > 0 ? norm_sum / norm_count : std::numeric_limits<double>::quiet_NaN();
    s.mean_time /= n;
    s.mean_time_upper /= n;
    s.mean_time_lower /= n;
    s.median_time = median(totals);
    return s;
}

void write_results_csv(const MethodResult& result, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "theta_id,x_hat,feasible,true_cost,regret,normalized_regret,wall_time_upper,wall_time_lower,"
           "wall_time_total\n";
    for (const auto& r : result.rows) {
        out << r.theta_id << ',' << bits(r.x_hat) << ',' << (r.feasible ? 1 : 0) << ',' << format_number(r.true_cost)
            << ',' << format_number(r.regret) << ',' << format_number(r.normalized_regret) << ','
            << format_number(r.wall_time_upper) << ',' << format_number(r.wall_time_lower) << ','
            << format_number(r.wall_time_total) << '\n';
    }
}

void write_trajectory_csv(const MethodResult& result, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "theta_id,time_s,incumbent_objective\n";
    for (const auto& t : result.trajectory) {
        out << t.theta_id << ',' << format_number(t.time_s) << ',' << format_number(t.incumbent_objective) << '\n';
    }
}

void write_summary_csv(const std::vector<MethodSummary>& summaries, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "method,instances,r_abs,r_norm,norm_skipped,mean_time,median_time,mean_time_upper,mean_time_lower\n";
    for (const auto& s : summaries) {
        out << s.method_id << ',' << s.instances << ',' << format_number(s.r_abs) << ',' << format_number(s.r_norm)
            << ',' << s.norm_skipped << ',' << format_number(s.mean_time) << ',' << format_number(s.median_time) << ','
            << format_number(s.mean_time_upper) << ',' << format_number(s.mean_time_lower) << '\n';
    }
}

std::vector<MethodRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("theta_id,x_hat,feasible", 0) != 0) throw Error(ErrorCode::kParse, path.string() + ": bad header");
    std::vector<MethodRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw Error(ErrorCode::kParse, path.string() + ": expected 9 fields");
        try {
            MethodRow r;
            r.theta_id = std::stoi(f[0]);
            for (char ch : f[1]) {
                if (ch != '0' && ch != '1') throw Error(ErrorCode::kParse, path.string() + ": bad x_hat");
                r.x_hat.push_back(ch == '1' ? 1.0 : 0.0);
            }
            r.feasible = f[2] == "1";
            r.true_cost = std::stod(f[3]);
            r.regret = std::stod(f[4]);
            r.normalized_regret = std::stod(f[5]);
            r.wall_time_upper = std::stod(f[6]);
            r.wall_time_lower = std::stod(f[7]);
            r.wall_time_total = std::stod(f[8]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::kParse, path.string() + ": bad number in '" + line + "'");
        }
    }
    return rows;
}

}  // namespace hmip
