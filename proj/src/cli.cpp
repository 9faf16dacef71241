#include "cfbound/cli.hpp"

#include "cfbound/benchgen.hpp"
#include "cfbound/credible.hpp"
#include "cfbound/emcc.hpp"
#include "cfbound/errors.hpp"
#include "cfbound/io.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>

namespace cfbound {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct EmOptions {
    double epsilon = 1e-6;
    int max_iters = 500;
    std::string metric = "max-abs";
    std::uint64_t seed = 0;
    double init_concentration = 0.01;
    double init_floor = 0.01;
    int max_reseeds = 50;
    bool allow_unconverged = false;
    double tolerance = kCompatibilityTolerance;

    EmConfig config(int restarts, int threads) const {
        EmConfig c;
        c.epsilon = epsilon;
        c.max_iters = max_iters;
        c.metric = metric == "l1" ? Metric::l1 : Metric::max_abs;
        c.seed = seed;
        c.restarts = restarts;
        c.init_concentration = init_concentration;
        c.init_floor = init_floor;
        c.max_reseeds = max_reseeds;
        c.require_convergence = !allow_unconverged;
        c.compatibility_tolerance = tolerance;
        c.threads = threads;
        c.validate();
        return c;
    }
};

void add_em_options(CLI::App* cmd, EmOptions& o) {
    cmd->add_option("--epsilon", o.epsilon, "convergence threshold on the parameter distance")->capture_default_str();
    cmd->add_option("--max-iters", o.max_iters, "EM iteration cap per run")->capture_default_str();
    cmd->add_option("--metric", o.metric, "parameter distance")
        ->check(CLI::IsMember({"max-abs", "l1"}))
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "master seed")->capture_default_str();
    cmd->add_option("--init-concentration", o.init_concentration, "Dirichlet concentration of the initialisation")
        ->capture_default_str();
    cmd->add_option("--init-floor", o.init_floor, "uniform weight mixed into the initialisation")
        ->capture_default_str();
    cmd->add_option("--max-reseeds", o.max_reseeds, "re-draws allowed per run")->capture_default_str();
    cmd->add_flag("--allow-unconverged", o.allow_unconverged, "keep runs that stop at max-iters");
    cmd->add_option("--tolerance", o.tolerance, "compatibility tolerance on probabilities")->capture_default_str();
}

json config_json(const EmConfig& c) {
    return {{"epsilon", c.epsilon},
            {"max_iters", c.max_iters},
            {"metric", c.metric == Metric::l1 ? "l1" : "max-abs"},
            {"seed", c.seed},
            {"runs", c.restarts},
            {"init_concentration", c.init_concentration},
            {"init_floor", c.init_floor},
            {"max_reseeds", c.max_reseeds},
            {"require_convergence", c.require_convergence},
            {"require_compatibility", c.require_compatibility},
            {"compatibility_tolerance", c.compatibility_tolerance}};
}

json diagnostics_json(const RunDiagnostics& d) {
    return {{"seed", d.seed},
            {"iterations", d.iterations},
            {"converged", d.converged},
            {"failed", d.failed},
            {"reseeds", d.reseeds},
            {"rejected", d.rejected},
            {"log_likelihood", d.log_likelihood},
            {"ll_star", d.ll_star},
            {"max_residual", d.max_residual},
            {"compatible", d.compatible},
            {"likelihood_check", d.likelihood_check},
            {"worst_decrease", d.worst_decrease},
            {"monotone", d.monotone}};
}

// runs body[i] on a small pool; the first exception (by index) is rethrown
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int t = std::clamp(threads, 1, std::max(n, 1));
    if (t == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < t; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// query values of the non-failed runs stored in a runs file
RunSet query_runs(const json& runs, const QueryFile& qf) {
    const ModelFile mf = model_from_json(runs.at("model"));
    validate_query(mf.model, qf.query);
    std::vector<double> values;
    int failed = 0;
    for (const auto& r : runs.at("runs")) {
        if (r.at("diagnostics").at("failed").get<bool>()) {
            ++failed;
            continue;
        }
        const Scm fscm = mf.model.with_assignment(assignment_from_json(mf.model, r.at("pmfs")));
        values.push_back(twin_query(fscm, qf.query, qf.max_worlds));
    }
    if (values.empty()) throw ModelError("no successful run in the runs file");
    RunSet rs = make_runset(std::move(values));
    rs.failed = failed;
    return rs;
}

json runset_json(const RunSet& rs) {
    return {{"lower", rs.lower}, {"upper", rs.upper}, {"k", rs.k()}, {"failed", rs.failed}, {"values", rs.values}};
}

void write_or_print(const std::string& out, const json& j) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
    } else {
        write_json(out, j);
    }
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string model, data, out, query;
    std::optional<std::int64_t> d0;
    std::optional<double> p_s0;
    bool conservative = false;
    int runs = 30;
    EmOptions em;
};

int cmd_fit(const FitArgs& a, int threads) {
    const ModelFile mf = read_model(a.model);
    const auto& sel = mf.selector;
    SelectedDataset ds;
    std::string mode;
    if (a.conservative) {
        if (!sel) throw ModelError("--conservative-limit needs a model with a selector");
        if (!a.data.empty()) {
            // only validated; the selected records carry no weight in the limit
            selected_only(mf.model, read_csv(a.data, mf.model), 0, sel);
            spdlog::warn("conservative limit: records in {} are ignored", a.data);
        }
        ds = conservative_limit_dataset(sel);
        mode = "conservative_limit";
    } else {
        if (a.data.empty()) throw ParseError("--data is required");
        const auto rows = read_csv(a.data, mf.model);
        if (a.d0) {
            ds = selected_only(mf.model, rows, *a.d0, sel);
            mode = "d0";
        } else if (a.p_s0) {
            ds = selected_only(mf.model, rows, 0, sel);
            if (*a.p_s0 > 0.0 && !sel) throw ModelError("--p-s0 > 0 needs a model with a selector");
            ds.d0 = estimate_d0(ds.d1(), *a.p_s0);
            mode = "p_s0";
        } else {
            ds = partition(mf.model, rows, sel);
            mode = "partition";
        }
    }
    spdlog::info("fit: d1 = {}, d0 = {} ({})", ds.d1(), ds.d0, mode);

    const EmConfig cfg = a.em.config(a.runs, threads);
    const EmccProblem problem(mf.model, ds);
    const auto runs = emcc_runs(problem, cfg);

    json jruns = json::array();
    int failed = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        failed += r.diag.failed ? 1 : 0;
        jruns.push_back({{"index", i},
                         {"pmfs", r.diag.failed ? json(nullptr) : assignment_to_json(problem.structure(), r.pmfs)},
                         {"diagnostics", diagnostics_json(r.diag)}});
    }
    if (failed == static_cast<int>(runs.size())) throw ModelError("every run failed: no compatible model was found");
    if (failed > 0) spdlog::warn("{} of {} runs failed", failed, runs.size());

    json out = {{"tool", "cfbound"},
                {"version", kToolVersion},
                {"model_path", a.model},
                {"data_path", a.data},
                {"model", model_to_json(mf.model.without_pmfs(), sel)},
                {"data", {{"mode", mode}, {"d0", ds.d0}, {"d1", ds.d1()}, {"ll_star", problem.ll_star()}}},
                {"seed", cfg.seed},
                {"config", config_json(cfg)},
                {"failed", failed},
                {"runs", jruns}};
    if (!a.query.empty()) {
        const QueryFile qf = read_query(a.query);
        const RunSet rs = query_runs(out, qf);
        out["query"] = query_to_json(qf.query);
        out["values"] = rs.values;
        out["interval"] = {rs.lower, rs.upper};
        spdlog::info("query interval [{:.6f}, {:.6f}]", rs.lower, rs.upper);
    }
    write_json(a.out, out);
    return kExitOk;
}

int cmd_query(const std::string& runs_path, const std::string& query_path, const std::string& out) {
    const json runs = read_json(runs_path);
    const QueryFile qf = read_query(query_path);
    const RunSet rs = query_runs(runs, qf);
    json j = runset_json(rs);
    j["query"] = query_to_json(qf.query);
    spdlog::info("interval [{:.6f}, {:.6f}] over {} runs", rs.lower, rs.upper, rs.k());
    write_or_print(out, j);
    return kExitOk;
}

int cmd_credible(const std::string& runs_path, const std::string& query_path, double delta, double target,
                 const std::string& out) {
    const json runs = read_json(runs_path);
    std::vector<double> values;
    if (!query_path.empty()) {
        values = query_runs(runs, read_query(query_path)).values;
    } else if (runs.contains("values")) {
        for (const auto& v : runs.at("values")) {
            if (!v.is_null()) values.push_back(v.get<double>());
        }
    } else {
        throw ParseError(runs_path + ": no query values stored, pass --query");
    }
    if (!(target > 0.0 && target < 1.0)) throw DomainError("--target must lie in (0, 1)");
    const RunSet rs = make_runset(std::move(values));
    const StoppingResult sr = stopping_rule(rs, delta, target);
    json j = {{"coverage", sr.probability},
              {"alpha", sr.fit ? json(sr.fit->alpha) : json(nullptr)},
              {"beta", sr.fit ? json(sr.fit->beta) : json(nullptr)},
              {"decision", to_string(sr.decision)},
              {"identifiable", sr.identifiable_route},
              {"k", rs.k()},
              {"lower", rs.lower},
              {"upper", rs.upper},
              {"delta", delta},
              {"target", target}};
    write_or_print(out, j);
    return kExitOk;
}

std::string case_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case_%04d", i);
    return buf;
}

int cmd_benchmark(const std::string& spec_path, int cases, const std::string& out, std::optional<std::uint64_t> seed,
                  int threads) {
    BenchmarkSpec spec = spec_from_json(read_json(spec_path));
    if (seed) spec.seed = *seed;
    spec.validate();
    if (cases < 1) throw DomainError("--cases must be positive");
    fs::create_directories(out);
    parallel_for(cases, threads, [&](int i) {
        const BenchmarkCase c = generate_case(spec, i);
        write_case(fs::path(out) / case_name(i), c, spec);
        spdlog::debug("{}: {} endogenous, P(S=1) = {:.3f}", case_name(i), c.pscm.observed().size(), c.p_s1);
    });
    json names = json::array();
    for (int i = 0; i < cases; ++i) names.push_back(case_name(i));
    write_json(fs::path(out) / "suite.json", {{"spec", spec_to_json(spec)}, {"cases", names}});
    spdlog::info("wrote {} cases to {}", cases, out);
    return kExitOk;
}

struct EvaluateArgs {
    std::string cases, out, plot, summary;
    std::vector<int> runs{10, 20, 30};
    int r_max = 80;
    EmOptions em;
};

int cmd_evaluate(const EvaluateArgs& a, int threads) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(a.cases)) {
        if (e.is_directory() && fs::exists(e.path() / "case.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ParseError(a.cases + ": no case directories");

    EmOptions em = a.em;
    em.allow_unconverged = true;
    const EmConfig base = em.config(a.r_max, 1);
    std::vector<std::vector<EvaluationRow>> per_case(dirs.size());
    std::vector<char> skipped(dirs.size(), 0);
    parallel_for(static_cast<int>(dirs.size()), threads, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        EmConfig cfg = base;
        cfg.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
        const std::string id = dirs[k].filename().string();
        try {
            per_case[k] = evaluate_case(id, read_case(dirs[k]), a.runs, a.r_max, cfg);
        } catch (const NumericError& e) {
            skipped[k] = 1;
            spdlog::warn("{} skipped: {}", id, e.what());
        }
    });
    std::vector<EvaluationRow> rows;
    for (auto& v : per_case) rows.insert(rows.end(), v.begin(), v.end());
    if (rows.empty()) throw NumericError("every case failed");
    const auto n_skipped = std::count(skipped.begin(), skipped.end(), 1);
    if (n_skipped > 0) spdlog::warn("{} of {} cases skipped", n_skipped, dirs.size());

    write_text_atomic(a.out, rows_to_csv(rows));
    const auto groups = summarize(rows);
    for (const auto& g : groups) {
        spdlog::info("{}: n = {}, median = {:.4f}, q1 = {:.4f}, q3 = {:.4f}", g.group, g.count, g.median, g.q1, g.q3);
    }
    if (!a.summary.empty()) write_text_atomic(a.summary, summary_to_csv(groups));
    if (!a.plot.empty()) write_text_atomic(a.plot, boxplot_csv(rows));
    return kExitOk;
}

void setup_logging(const std::string& level) {
    auto logger = spdlog::get("cfbound");
    if (!logger) logger = spdlog::stderr_color_mt("cfbound");
    spdlog::set_default_logger(logger);
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw ParseError("unknown log level '" + level + "'");
    spdlog::set_level(lvl);
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Counterfactual bounds under selection bias"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 1;
    std::string log_level = "info";
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--log-level", log_level, "trace, debug, info, warn, err, off")->capture_default_str();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "EMCC runs on a model and a dataset");
    c_fit->add_option("--model", fit.model, "model JSON")->required();
    c_fit->add_option("--data", fit.data, "CSV records");
    auto* o_d0 = c_fit->add_option("--d0", fit.d0, "number of unselected records");
    auto* o_ps0 = c_fit->add_option("--p-s0", fit.p_s0, "P(S=0); d0 is estimated from it");
    auto* o_lim = c_fit->add_flag("--conservative-limit", fit.conservative, "P(S=0) -> 1, no selected data");
    o_d0->excludes(o_ps0, o_lim);
    o_ps0->excludes(o_lim);
    c_fit->add_option("--runs", fit.runs, "EMCC restarts")->check(CLI::PositiveNumber)->capture_default_str();
    c_fit->add_option("--query", fit.query, "query JSON; values are stored with the runs");
    c_fit->add_option("--out", fit.out, "runs JSON")->required();
    add_em_options(c_fit, fit.em);

    std::string q_runs, q_query, q_out;
    auto* c_query = app.add_subcommand("query", "evaluate a query on stored runs");
    c_query->add_option("--runs", q_runs, "runs JSON")->required();
    c_query->add_option("--query", q_query, "query JSON")->required();
    c_query->add_option("--out", q_out, "bounds JSON (stdout when omitted)");

    std::string cr_runs, cr_query, cr_out;
    double delta = 0.0;
    double target = 0.95;
    auto* c_cred = app.add_subcommand("credible", "coverage of the run interval and stopping decision");
    c_cred->add_option("--runs", cr_runs, "runs or bounds JSON with query values")->required();
    c_cred->add_option("--query", cr_query, "query JSON, when the file stores no values");
    c_cred->add_option("--delta", delta, "absolute allowed error")->required();
    c_cred->add_option("--target", target, "required coverage probability")->capture_default_str();
    c_cred->add_option("--out", cr_out, "output JSON (stdout when omitted)");

    std::string b_spec, b_out;
    int b_cases = 20;
    std::optional<std::uint64_t> b_seed;
    auto* c_bench = app.add_subcommand("benchmark", "generate a suite of benchmark cases");
    c_bench->add_option("--spec", b_spec, "suite spec JSON")->required();
    c_bench->add_option("--cases", b_cases, "number of cases")->capture_default_str();
    c_bench->add_option("--seed", b_seed, "overrides the spec seed");
    c_bench->add_option("--out", b_out, "output directory")->required();

    EvaluateArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "RRMSE of r-run intervals against r_max-run ground truth");
    c_eval->add_option("--cases", ev.cases, "suite directory")->required();
    c_eval->add_option("--runs", ev.runs, "r values")->delimiter(',')->capture_default_str();
    c_eval->add_option("--r-max", ev.r_max, "runs of the ground truth")->capture_default_str();
    c_eval->add_option("--out", ev.out, "per-case report CSV")->required();
    c_eval->add_option("--summary", ev.summary, "quantile summary CSV");
    c_eval->add_option("--plot", ev.plot, "boxplot data CSV");
    add_em_options(c_eval, ev.em);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitParse;
    }

    try {
        setup_logging(log_level);
        if (*c_fit) return cmd_fit(fit, threads);
        if (*c_query) return cmd_query(q_runs, q_query, q_out);
        if (*c_cred) return cmd_credible(cr_runs, cr_query, delta, target, cr_out);
        if (*c_bench) return cmd_benchmark(b_spec, b_cases, b_out, b_seed, threads);
        if (*c_eval) return cmd_evaluate(ev, threads);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitParse;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitParse;
    } catch (const DomainError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitParse;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "file error: " << e.what() << '\n';
        return kExitParse;
    } catch (const ModelError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const CapacityExceeded& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const ZeroProbabilityEvidence& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    }
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> copy = args;
    std::vector<char*> argv;
    for (auto& s : copy) argv.push_back(s.data());
    argv.push_back(nullptr);
    return run_cli(static_cast<int>(copy.size()), argv.data());
}

}  // namespace cfbound
