// Command-line front end: model definition by JSON config, level shift
// operator computation, theorem verification, parameter scans, and the
// finite-mode oracle comparison.
//
// Exit codes: 0 success, 1 failed checks, 2 configuration error,
//             3 nonexistent limit (subcritical infrared), 4 quadrature failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lso/report.hpp"

namespace {

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw lso::ConfigError("empty epsilon grid");
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    // write once, atomically: stage then rename
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw lso::ConfigError("cannot open output file: " + path);
        out << text;
    }
    std::rename(tmp.c_str(), path.c_str());
}

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::string eps_grid;
    std::string format = "json";
    double tol = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool no_timing = false;
};

lso::ModelConfig load_with_overrides(const CommonArgs& args) {
    lso::ModelConfig cfg = lso::load_config(args.config_path);
    if (!args.eps_grid.empty()) cfg.run.epsilon_grid = parse_grid(args.eps_grid);
    if (args.tol > 0.0) cfg.run.kernel_tol = args.tol;
    if (args.seed_set) cfg.run.seed = args.seed;
    return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "model configuration file (JSON)")
        ->required();
    sub->add_option("--out", args.out_path, "output path (default: stdout)");
    sub->add_option("--eps-grid", args.eps_grid, "comma-separated epsilon grid override");
    sub->add_option("--tol", args.tol, "kernel tolerance override");
    sub->add_option("--seed", args.seed, "seed override")
        ->each([&](const std::string&) { args.seed_set = true; });
    sub->add_option("--format", args.format, "output format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--no-timing", args.no_timing,
                  "omit the timing block (byte-reproducible output)");
}

std::string spectra_csv(const lso::json& rep) {
    std::ostringstream os;
    os.precision(17);
    os << "# tool " << rep["tool"]["name"].get<std::string>() << " "
       << rep["tool"]["version"].get<std::string>() << "\n";
    os << "# config " << rep["config"]["name"].get<std::string>() << " hash "
       << rep["config"]["hash"].get<std::string>() << "\n";
    os << "bohr_frequency,eigenvalue_re,eigenvalue_im,kernel_dim\n";
    for (const auto& sec : rep["sectors"]) {
        const double e = sec["bohr_frequency"].get<double>();
        const int kd = sec["limit"]["kernel"]["dim"].get<int>();
        for (const auto& z : sec["limit"]["spectrum"])
            os << e << "," << z["re"].get<double>() << "," << z["im"].get<double>() << ","
               << kd << "\n";
    }
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"level shift operators for open quantum systems"};
    app.require_subcommand(1);

    CommonArgs compute_args, verify_args, scan_args, oracle_args;

    auto* compute = app.add_subcommand("compute", "build sector operators and spectra");
    add_common(compute, compute_args);

    auto* verify = app.add_subcommand("verify", "run the theorem and oracle check battery");
    add_common(verify, verify_args);
    bool corrupt = false;
    verify->add_flag("--corrupt-closed-form", corrupt,
                     "test fixture: damage the zero-sector matrix (must fail)");

    auto* scan = app.add_subcommand("scan", "scan a parameter and emit a table");
    add_common(scan, scan_args);
    std::string param;
    std::string range;
    int steps = 10;
    scan->add_option("--param", param, "one of p|delta|beta|lambda")->required();
    scan->add_option("--range", range, "lo,hi")->required();
    scan->add_option("--steps", steps, "number of grid points");

    auto* oracle = app.add_subcommand("oracle", "finite-mode truncation cross-check");
    add_common(oracle, oracle_args);
    int modes = 0;
    double eps = 1e-2;
    oracle->add_option("--modes", modes, "mode count (default: run.oracle_modes)");
    oracle->add_option("--eps", eps, "regularization for the comparison");

    auto* diag = app.add_subcommand(
        "diagonalize", "rotate a non-diagonal Hamiltonian and its couplings "
                       "to the eigenbasis expected by model configs");
    std::string diag_in, diag_out;
    diag->add_option("--input", diag_in, "JSON with 'H' (and optional 'G' list)")
        ->required();
    diag->add_option("--out", diag_out, "output path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (compute->parsed()) {
            const auto cfg = load_with_overrides(compute_args);
            const auto rep = lso::cmd_compute(cfg, !compute_args.no_timing);
            write_output(compute_args.out_path,
                         compute_args.format == "csv" ? spectra_csv(rep)
                                                      : rep.dump(2) + "\n");
            return 0;
        }
        if (verify->parsed()) {
            const auto cfg = load_with_overrides(verify_args);
            const auto rep = lso::cmd_verify(cfg, corrupt, !verify_args.no_timing);
            write_output(verify_args.out_path, rep.dump(2) + "\n");
            return rep["summary"]["pass"].get<bool>() ? 0 : 1;
        }
        if (scan->parsed()) {
            const auto cfg = load_with_overrides(scan_args);
            const auto grid = parse_grid(range);
            if (grid.size() != 2) throw lso::ConfigError("--range expects lo,hi");
            // stream rows so a failure still leaves partial results
            std::ostringstream partial;
            partial.precision(17);
            lso::ScanResult sc;
            try {
                sc = lso::cmd_scan(cfg, param, grid[0], grid[1], steps,
                                   [&](const lso::ScanRow& row) {
                                       partial << row.value;
                                       for (double v : row.columns) partial << "," << v;
                                       partial << "\n";
                                   });
            } catch (...) {
                write_output(scan_args.out_path, partial.str());
                throw;
            }
            if (scan_args.format == "json") {
                lso::json jr;
                jr["parameter"] = sc.parameter;
                jr["columns"] = sc.column_names;
                lso::json rows = lso::json::array();
                for (const auto& row : sc.rows) {
                    lso::json r = lso::json::array();
                    r.push_back(row.value);
                    for (double v : row.columns) r.push_back(v);
                    rows.push_back(r);
                }
                jr["rows"] = rows;
                write_output(scan_args.out_path, jr.dump(2) + "\n");
            } else {
                write_output(scan_args.out_path, lso::scan_to_csv(sc));
            }
            return 0;
        }
        if (oracle->parsed()) {
            const auto cfg = load_with_overrides(oracle_args);
            const int n = modes > 0 ? modes : cfg.run.oracle_modes;
            const auto rep = lso::cmd_oracle(cfg, n, eps, !oracle_args.no_timing);
            write_output(oracle_args.out_path, rep.dump(2) + "\n");
            return rep["oracle"]["pass"].get<bool>() ? 0 : 1;
        }
        if (diag->parsed()) {
            std::ifstream in(diag_in);
            if (!in) throw lso::ConfigError("cannot open input file: " + diag_in);
            lso::json j;
            try {
                j = lso::json::parse(in);
            } catch (const std::exception& e) {
                throw lso::ConfigError(std::string("input parse error: ") + e.what());
            }
            if (!j.contains("H")) throw lso::ConfigError("diagonalize: missing 'H'");
            const lso::Matrix H = lso::cfg_detail::parse_matrix(j.at("H"), "H");
            lso::require_hermitian(H, 1e-10);
            Eigen::SelfAdjointEigenSolver<lso::Matrix> es(H);
            lso::json out;
            std::vector<double> energies(es.eigenvalues().data(),
                                         es.eigenvalues().data() + H.rows());
            out["energies"] = energies;
            if (j.contains("G")) {
                lso::json gs = lso::json::array();
                for (const auto& gj : j.at("G")) {
                    const lso::Matrix G = lso::cfg_detail::parse_matrix(gj, "G");
                    if (G.rows() != H.rows())
                        throw lso::ConfigError("diagonalize: G dimension mismatch");
                    gs.push_back(lso::matrix_to_json(
                        es.eigenvectors().adjoint() * G * es.eigenvectors()));
                }
                out["G"] = gs;
            }
            write_output(diag_out, out.dump(2) + "\n");
            return 0;
        }
    } catch (const lso::NonexistentLSO& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const lso::QuadratureError& e) {
        std::cerr << "error: " << e.what() << " (achieved " << e.achieved << ")\n";
        return 4;
    } catch (const lso::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
