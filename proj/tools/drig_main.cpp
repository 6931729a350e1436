#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drig/io.hpp"
#include "drig/random.hpp"

namespace {

using drig::Error;
using drig::ErrorKind;
using drig::io::Json;

constexpr int kInputError = 2;
constexpr int kNumericError = 3;

Json json_argument(const std::string& text, const std::string& what) {
    const auto first = text.find_first_not_of(" \t\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        try {
            return Json::parse(text);
        } catch (const Json::exception& e) {
            throw Error(ErrorKind::InvalidInput, "invalid JSON for " + what + ": " + e.what());
        }
    }
    return drig::io::read_json_file(text);
}

void emit(const std::string& out, const std::string& content) {
    if (out.empty()) {
        std::cout << content;
    } else {
        drig::io::write_file_atomic(out, content);
    }
}

struct FitArgs {
    std::string csv;
    std::string env_column = "env";
    std::string response_column = "y";
    std::string method = "drig";
    std::optional<double> gamma;
    std::string gamma_matrix;
    std::string weights = "size";
    std::string reference;
    std::string test_labeled;
    std::string test_unlabeled;
    std::string test_info;
    std::string out;
};

drig::TestDomainInfo load_test_info(const FitArgs& a, const drig::io::EnvironmentData& data) {
    if (!a.test_info.empty()) return drig::io::test_info_from_json(drig::io::read_json_file(a.test_info));
    if (a.test_labeled.empty()) {
        throw Error(ErrorKind::InvalidInput, "this method needs --test-labeled or --test-info");
    }
    std::vector<std::size_t> x_cols;
    const auto labeled_table = drig::io::read_csv_file(a.test_labeled);
    for (const auto& name : data.covariates) x_cols.push_back(labeled_table.column(name));
    std::vector<std::size_t> lab_cols = x_cols;
    lab_cols.push_back(labeled_table.column(a.response_column));
    const drig::Matrix labeled = drig::io::numeric_matrix(labeled_table, lab_cols);

    drig::Matrix unlabeled(0, static_cast<Eigen::Index>(data.covariates.size()));
    if (!a.test_unlabeled.empty()) {
        const auto table = drig::io::read_csv_file(a.test_unlabeled);
        std::vector<std::size_t> cols;
        for (const auto& name : data.covariates) cols.push_back(table.column(name));
        unlabeled = drig::io::numeric_matrix(table, cols);
        if (unlabeled.rows() == 0) throw Error(ErrorKind::EmptyEnvironment, "unlabeled test sample is empty");
    }
    const drig::Vector center = data.samples.front().colwise().mean().transpose();
    return drig::sample_test_info(labeled, unlabeled, center);
}

int run_fit(const FitArgs& a) {
    const auto table = drig::io::read_csv_file(a.csv);
    const auto data = drig::io::split_environments(table, a.env_column, a.response_column, a.reference);
    const drig::WeightMode mode = a.weights == "uniform" ? drig::WeightMode::uniform : drig::WeightMode::sample_size;
    const drig::MomentSet moments = drig::empirical_moments(data.samples, mode);

    const auto method = drig::method_from_string(a.method == "causal" ? "causal_dantzig" : a.method);
    if (!method) throw Error(ErrorKind::InvalidInput, "unknown method '" + a.method + "'");
    const auto need_gamma = [&]() {
        if (!a.gamma) throw Error(ErrorKind::InvalidInput, "--gamma is required for " + a.method);
        return *a.gamma;
    };

    drig::FitResult fit;
    switch (*method) {
        case drig::Method::drig: fit = drig::drig(moments, need_gamma()); break;
        case drig::Method::anchor: fit = drig::anchor(moments, need_gamma()); break;
        case drig::Method::drig_inf: fit = drig::drig_infinity(moments); break;
        case drig::Method::causal_dantzig: fit = drig::causal_dantzig(moments); break;
        case drig::Method::group_dro: fit = drig::group_dro(moments); break;
        case drig::Method::ols_ref: fit = drig::ols_reference(moments); break;
        case drig::Method::ols_pooled: fit = drig::ols_pooled(moments); break;
        case drig::Method::drig_a: {
            drig::GammaMatrix g;
            if (!a.gamma_matrix.empty()) {
                g = drig::io::gamma_matrix_from_json(json_argument(a.gamma_matrix, "--gamma-matrix"));
            } else {
                g = drig::GammaMatrix::scaled_identity(moments.front().p(), need_gamma());
            }
            fit = drig::drig_a(moments, g);
            break;
        }
        case drig::Method::drig_a_adaptive:
            fit = drig::drig_a_adaptive(moments, load_test_info(a, data));
            break;
        case drig::Method::test_ols: fit = drig::test_ols(load_test_info(a, data)); break;
    }

    Json j = drig::io::to_json(fit);
    j["covariates"] = data.covariates;
    j["reference"] = data.labels.front();
    emit(a.out, j.dump(2) + "\n");
    return 0;
}

struct SimulateArgs {
    std::string spec;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    const drig::ScmSpec spec = drig::io::spec_from_json(drig::io::read_json_file(a.spec));
    std::vector<drig::Matrix> samples;
    for (std::size_t e = 0; e < spec.environments.size(); ++e) {
        samples.push_back(drig::sample(spec, e, a.n, drig::derive_seed(a.seed, e)));
    }
    emit(a.out, drig::io::samples_csv(samples));
    return 0;
}

struct ReplicateArgs {
    std::string config;
    std::string out_dir = ".";
};

int run_replicate(const ReplicateArgs& a) {
    const drig::ExperimentConfig config = drig::io::config_from_json(drig::io::read_json_file(a.config));
    const drig::RunResult result = drig::run(config);
    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path dir(a.out_dir);
    drig::io::write_file_atomic((dir / "results.csv").string(), drig::io::results_csv(result.rows));
    const Json summary = drig::io::summary_json(config, result);
    drig::io::write_file_atomic((dir / "summary.json").string(), summary.dump(2) + "\n");

    std::cout << "scenario " << drig::to_string(config.scenario) << ", " << result.rows.size() << " rows, "
              << result.errors.size() << " failed cells\n";
    const auto& methods = summary.at("methods");
    for (const auto& [name, curve] : methods.items()) {
        std::cout << name << " median:";
        for (std::size_t i = 0; i < curve.at("alpha").size(); ++i) {
            const auto& m = curve.at("median")[i];
            std::cout << " a=" << drig::io::format_double(curve.at("alpha")[i].get<double>()) << ":"
                      << (m.is_null() ? std::string("nan") : drig::io::format_double(m.get<double>()));
        }
        std::cout << "\n";
    }
    if (methods.contains("drig_a_adaptive") && methods.contains("test_ols")) {
        const auto& ad = methods.at("drig_a_adaptive").at("median");
        const auto& to = methods.at("test_ols").at("median");
        std::size_t below = 0;
        for (std::size_t i = 0; i < ad.size(); ++i) {
            if (!ad[i].is_null() && !to[i].is_null() && ad[i].get<double>() < to[i].get<double>()) ++below;
        }
        std::cout << "drig_a_adaptive median below test_ols median at " << below << " of " << ad.size()
                  << " alphas\n";
    }
    return 0;
}

struct EvaluateArgs {
    std::string spec;
    std::string b;
    std::string cls = "drig";
    std::optional<double> gamma;
    std::string gamma_matrix;
    std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
    const drig::ScmSpec spec = drig::io::spec_from_json(drig::io::read_json_file(a.spec));
    Json bj = json_argument(a.b, "--b");
    if (bj.is_object()) {
        if (!bj.contains("b")) throw Error(ErrorKind::InvalidInput, "--b object has no field 'b'");
        bj = bj.at("b");
    }
    const drig::Vector b = drig::io::vector_from_json(bj, "b");

    const auto kind = drig::class_from_string(a.cls);
    if (!kind) throw Error(ErrorKind::InvalidInput, "unknown class '" + a.cls + "'");
    drig::PerturbationClass cls;
    if (*kind == drig::ClassKind::drig_a) {
        drig::GammaMatrix g;
        if (!a.gamma_matrix.empty()) {
            g = drig::io::gamma_matrix_from_json(json_argument(a.gamma_matrix, "--gamma-matrix"));
        } else if (a.gamma) {
            g = drig::GammaMatrix::scaled_identity(spec.p, *a.gamma);
        } else {
            throw Error(ErrorKind::InvalidInput, "the drig_a class needs --gamma-matrix or --gamma");
        }
        cls = drig::build_class(spec, g);
    } else {
        const bool needs_gamma = *kind == drig::ClassKind::drig || *kind == drig::ClassKind::anchor;
        if (needs_gamma && !a.gamma) throw Error(ErrorKind::InvalidInput, "--gamma is required for " + a.cls);
        cls = drig::build_class(spec, *kind, a.gamma.value_or(0.0));
    }
    const drig::WorstCase wc = drig::worst_case(spec, b, cls);

    Json j;
    j["risk"] = std::isfinite(wc.risk) ? Json(wc.risk) : Json("inf");
    j["class"] = a.cls;
    if (a.gamma && *kind != drig::ClassKind::drig_a) j["gamma"] = *a.gamma;
    j["attained_by"] = wc.v ? drig::io::to_json(wc.gram()) : Json(nullptr);
    emit(a.out, j.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributionally robust linear estimators for multi-environment data"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit an estimator on environment-labeled CSV data");
    fit_cmd->add_option("csv", fit.csv, "Input CSV")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--env-column", fit.env_column, "Environment label column")->capture_default_str();
    fit_cmd->add_option("--response-column", fit.response_column, "Response column")->capture_default_str();
    fit_cmd->add_option("--method", fit.method,
                        "drig, drig_inf, anchor, drig_a, causal_dantzig, group_dro, ols_ref, ols_pooled, "
                        "drig_a_adaptive or test_ols")
        ->capture_default_str();
    fit_cmd->add_option("--gamma", fit.gamma, "Regularization strength");
    fit_cmd->add_option("--gamma-matrix", fit.gamma_matrix,
                        "DRIG-A penalty: inline JSON or file, {\"Gamma_x\": [[...]], \"gamma_y\": g} or a full matrix");
    fit_cmd->add_option("--weights", fit.weights, "Environment weights")
        ->check(CLI::IsMember({"uniform", "size"}))
        ->capture_default_str();
    fit_cmd->add_option("--reference", fit.reference, "Reference environment label");
    fit_cmd->add_option("--test-labeled", fit.test_labeled, "Labeled test CSV (covariates and response)")
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--test-unlabeled", fit.test_unlabeled, "Unlabeled test CSV (covariates)")
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--test-info", fit.test_info, "Test-domain moments as JSON")->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", fit.out, "Output file (default stdout)");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Draw samples from an SCM spec");
    sim_cmd->add_option("spec", sim.spec, "SCM spec JSON")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--n", sim.n, "Samples per environment")->required()->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    sim_cmd->add_option("--out", sim.out, "Output CSV (default stdout)");

    ReplicateArgs rep;
    auto* rep_cmd = app.add_subcommand("replicate", "Run an experiment sweep");
    rep_cmd->add_option("config", rep.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
    rep_cmd->add_option("--out", rep.out_dir, "Output directory")->capture_default_str();

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Worst-case risk of a predictor over a perturbation class");
    ev_cmd->add_option("spec", ev.spec, "SCM spec JSON")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--b", ev.b, "Coefficients: inline JSON array, or a file with an array or fit result")
        ->required();
    ev_cmd->add_option("--class", ev.cls, "drig, anchor, drig_a, group_dro or causal")->capture_default_str();
    ev_cmd->add_option("--gamma", ev.gamma, "Class parameter");
    ev_cmd->add_option("--gamma-matrix", ev.gamma_matrix, "DRIG-A penalty (inline JSON or file)");
    ev_cmd->add_option("--out", ev.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit);
        if (sim_cmd->parsed()) return run_simulate(sim);
        if (rep_cmd->parsed()) return run_replicate(rep);
        if (ev_cmd->parsed()) return run_evaluate(ev);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_input_error() ? kInputError : kNumericError;
    } catch (const Json::exception& e) {
        std::cerr << "error: InvalidInput: " << e.what() << "\n";
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: InvalidInput: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericError;
    }
    return kInputError;
}
