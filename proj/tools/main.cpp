// treesim: simulation and verification toolkit for contraction-invariant
// random trees. Subcommands: gen, verify, massproc.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treesim/generators.hpp"
#include "treesim/one_ended_rtree.hpp"
#include "treesim/one_ended_tree.hpp"
#include "treesim/qsd.hpp"
#include "treesim/rng.hpp"
#include "treesim/rtree.hpp"
#include "treesim/serialize.hpp"
#include "treesim/stats.hpp"

namespace {

using namespace treesim;

struct Options {
    std::string command;
    std::string target;
    std::optional<std::uint64_t> seed;
    long replicates = 100000;
    int depth = 2;
    double p = 0.5;
    double q = 0.5;
    double level = 1e-3;
    double gamma = 0.5;
    double lambda = 2.0;
    double alpha = 0.5;
    double eps_cutoff = 0.01;
    double horizon = 1.0;
    double step = 0.05;
    int n_big = 6;
    int m_small = 3;
    double x0 = 1.0;
    int n_min = -10;
    int n_max = 3;
    int kernel_k = 400;
    int powers = 6;
    double tv_threshold = 0.1;
    long count = 1;
    bool strict = false;
    std::string spec_path;
    std::string tree_path;
    std::string out_path;
    std::string eta_out_path;
};

Rng require_seed(const Options& opt) {
    if (!opt.seed) {
        std::cerr << "error: --seed is required for randomized commands\n";
        std::exit(2);
    }
    return Rng(*opt.seed);
}

void write_output(const Options& opt, const std::string& text) {
    if (opt.out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(opt.out_path, std::ios::binary);
    if (!f) {
        std::cerr << "error: cannot open output file " << opt.out_path << "\n";
        std::exit(2);
    }
    f << text;
}

std::string param_echo(const Options& opt, std::initializer_list<const char*> keys) {
    std::ostringstream os;
    bool first = true;
    auto put = [&](const std::string& k, const std::string& v) {
        if (!first) os << ';';
        first = false;
        os << k << '=' << v;
    };
    for (const char* k : keys) {
        const std::string key(k);
        if (key == "p") put(key, format_double(opt.p));
        else if (key == "q") put(key, format_double(opt.q));
        else if (key == "gamma") put(key, format_double(opt.gamma));
        else if (key == "lambda") put(key, format_double(opt.lambda));
        else if (key == "alpha") put(key, format_double(opt.alpha));
        else if (key == "eps") put(key, format_double(opt.eps_cutoff));
        else if (key == "depth") put(key, std::to_string(opt.depth));
        else if (key == "replicates") put(key, std::to_string(opt.replicates));
        else if (key == "level") put(key, format_double(opt.level));
        else if (key == "n") put(key, std::to_string(opt.n_big));
        else if (key == "m") put(key, std::to_string(opt.m_small));
        else if (key == "x0") put(key, format_double(opt.x0));
        else if (key == "n_min") put(key, std::to_string(opt.n_min));
        else if (key == "n_max") put(key, std::to_string(opt.n_max));
        else if (key == "K") put(key, std::to_string(opt.kernel_k));
        else if (key == "powers") put(key, std::to_string(opt.powers));
        else if (key == "horizon") put(key, format_double(opt.horizon));
        else if (key == "step") put(key, format_double(opt.step));
    }
    return os.str();
}

LambdaSpec spec_from_options(const Options& opt) {
    if (!opt.spec_path.empty()) {
        std::ifstream f(opt.spec_path);
        if (!f) {
            std::cerr << "error: cannot open spec file " << opt.spec_path << "\n";
            std::exit(2);
        }
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_lambda_spec(ss.str()).spec;
    }
    return LambdaSpec::comb(opt.x0, opt.p, opt.q, opt.n_min, opt.n_max);
}

// Fixture used by the commute suite: three unit edges in a path-plus-branch
// with one atom of mass 0.5.
FiniteRTree branch_fixture() {
    FiniteRTree t;
    const int a = t.add_edge(0, 1.0);
    const int b = t.add_edge(a, 1.0);
    t.add_edge(a, 1.0);
    t.add_atom(b, 0.5, 0.5);
    return t;
}

// Fixture used by the compat suite: segment of length 1/2 with an atom of
// mass 1/2 at its far end (total mass 1).
FiniteRTree segment_atom_fixture() {
    FiniteRTree t;
    const int a = t.add_edge(0, 0.5);
    t.add_atom(a, 0.5, 0.5);
    return t;
}

int emit_reports(const Options& opt, const std::vector<TestReport>& reports) {
    std::string csv = csv_header() + "\n";
    bool all_ok = true;
    for (const auto& r : reports) {
        csv += csv_row(r) + "\n";
        std::cout << report_text(r) << "\n";
        if (r.verdict == "fail") all_ok = false;
        if (opt.strict && r.verdict == "inconclusive") all_ok = false;
    }
    if (!opt.out_path.empty()) write_output(opt, csv);
    return all_ok ? 0 : 1;
}

int cmd_gen(const Options& opt) {
    std::ostringstream out;
    if (opt.target == "ray") {
        // the bare discrete ray; deterministic, emitted as its depth-k prefix
        for (long i = 0; i < opt.count; ++i)
            out << to_text(truncate(OneEndedTree::bare_ray(), opt.depth)) << "\n";
    } else if (opt.target == "densityray") {
        const OneEndedRTree ray = uniform_density_ray(opt.lambda);
        for (long i = 0; i < opt.count; ++i)
            out << to_text(truncate_radius(ray, static_cast<double>(opt.depth))) << "\n";
    } else if (opt.target == "bouquet") {
        Rng rng = require_seed(opt);
        for (long i = 0; i < opt.count; ++i) {
            const OneEndedTree t =
                geometric_bouquet_ray(opt.gamma, rng.stream("gen", static_cast<std::uint64_t>(i)));
            out << to_text(truncate(t, opt.depth)) << "\n";
        }
    } else if (opt.target == "forest") {
        Rng rng = require_seed(opt);
        const LambdaSpec spec = spec_from_options(opt);
        const DecorationKernel kernel = DecorationKernel::unit_point_mass();
        for (long i = 0; i < opt.count; ++i) {
            const OneEndedRTree t =
                poisson_forest_ray(spec, kernel, rng.stream("gen", static_cast<std::uint64_t>(i)));
            out << to_text(truncate_radius(t, static_cast<double>(opt.depth))) << "\n";
        }
    } else {
        std::cerr << "error: unknown generator '" << opt.target << "'\n";
        return 2;
    }
    // echo the config so every emitted sample is reproducible
    std::ostringstream hdr;
    hdr << "# treesim gen " << opt.target;
    if (opt.seed) hdr << " seed=" << *opt.seed;
    hdr << " depth=" << opt.depth << " count=" << opt.count << "\n";
    write_output(opt, hdr.str() + out.str());
    return 0;
}

int cmd_verify(const Options& opt) {
    Rng rng = require_seed(opt);
    std::vector<TestReport> reports;

    if (opt.target == "selfsim") {
        const double gamma = opt.gamma;
        const double p = opt.p;
        auto bouquet = [gamma](Rng& r) { return geometric_bouquet_ray(gamma, r); };
        auto contract_pp = [p](const OneEndedTree& t, Rng& r) {
            return random_contract(t, p, p, r);
        };
        TestReport r1 = invariance_test(bouquet, contract_pp, opt.depth, opt.replicates,
                                        opt.level, rng.stream("bouquet"), "selfsim/bouquet");
        r1.params = param_echo(opt, {"gamma", "p", "depth", "replicates", "level"});
        reports.push_back(r1);

        const double lam = 1.0 / gamma;
        auto disc_ray = [lam](Rng& r) { return discretize(uniform_density_ray(lam), r); };
        TestReport r2 = invariance_test(disc_ray, contract_pp, opt.depth, opt.replicates,
                                        opt.level, rng.stream("ray"), "selfsim/density-ray");
        r2.params = param_echo(opt, {"lambda", "p", "depth", "replicates", "level"});
        reports.push_back(r2);
    } else if (opt.target == "commute") {
        FiniteRTree tree;
        if (!opt.tree_path.empty()) {
            std::ifstream f(opt.tree_path);
            std::ostringstream ss;
            ss << f.rdbuf();
            tree = parse_rtree(ss.str());
        } else {
            tree = branch_fixture();
        }
        TestReport r = commutation_test(tree, opt.p, opt.q, opt.replicates, opt.level,
                                        rng.stream("commute"), "commute/fixture");
        r.params = param_echo(opt, {"p", "q", "replicates", "level"});
        reports.push_back(r);
    } else if (opt.target == "compat") {
        const FiniteRTree tree = segment_atom_fixture();
        TestReport r = compatibility_test(tree, opt.n_big, opt.m_small, opt.replicates,
                                          opt.level, rng.stream("compat"), "compat/fixture");
        r.params = param_echo(opt, {"n", "m", "replicates", "level"});
        reports.push_back(r);
    } else if (opt.target == "corollary") {
        const LambdaSpec spec = spec_from_options(opt);
        const DecorationKernel kernel = DecorationKernel::unit_point_mass();
        const double d = spec.d_value();
        const double c = 1.0 / (1.0 + d);
        const Rng base = rng.stream("corollary");
        auto forest_side = [&](Rng& r) {
            Rng rf = r.stream("forest");
            Rng rd = r.stream("disc");
            return discretize(poisson_forest_ray(spec, kernel, rf), rd).decoration(0);
        };
        auto sampler_side = [&](Rng& r) { return sample_spine_subtree(spec, kernel, r); };
        const auto h1 = code_histogram(forest_side, opt.depth, opt.replicates,
                                       base.stream("h1"), "forest");
        const auto h2 = code_histogram(sampler_side, opt.depth, opt.replicates,
                                       base.stream("h2"), "sampler");
        TestReport r = two_sample_chi2(h1, h2, opt.level, "corollary/subtree-law");
        r.seed = rng.key();
        r.params = param_echo(opt, {"x0", "p", "q", "n_min", "n_max", "depth", "replicates"});
        reports.push_back(r);

        const long single = h2.counts.count("()") ? h2.counts.at("()") : 0;
        const double frac = static_cast<double>(single) / static_cast<double>(h2.total);
        TestReport rc;
        rc.name = "corollary/geo-zero";
        rc.method = "exact";
        rc.statistic = frac;
        rc.level = 0.01;
        rc.n1 = h2.total;
        rc.seed = rng.key();
        rc.params = "c=" + format_double(c);
        rc.verdict = std::fabs(frac - c) <= 0.01 ? "pass" : "fail";
        rc.notes = "empirical P(single root) vs c";
        reports.push_back(rc);
    } else if (opt.target == "coupling") {
        const double gamma = opt.gamma;
        auto bouquet = [gamma](Rng& r) { return geometric_bouquet_ray(gamma, r); };
        auto series = coupling_gap_test(bouquet, opt.p, opt.q, opt.powers, opt.depth,
                                        opt.replicates, rng.stream("coupling"), "coupling");
        for (auto& r : series) {
            r.params += ";" + param_echo(opt, {"gamma", "depth", "replicates"});
            reports.push_back(r);
        }
        TestReport fin;
        fin.name = "coupling/final-gap";
        fin.method = "tv";
        fin.statistic = series.empty() ? 1.0 : series.back().statistic;
        fin.level = opt.tv_threshold;
        fin.n1 = opt.replicates;
        fin.seed = rng.key();
        fin.verdict = (!series.empty() && series.back().verdict == "report" &&
                       series.back().statistic < opt.tv_threshold)
                          ? "pass"
                          : "fail";
        reports.push_back(fin);
    } else if (opt.target == "qsd") {
        LambdaSpec spec = opt.spec_path.empty()
                              ? LambdaSpec::comb(opt.x0, opt.p, opt.q, -40, 40)
                              : spec_from_options(opt);
        const int window = opt.kernel_k;
        const int k_eff = recommended_k_eff(spec, window, opt.p);
        const DeathKernel kernel(opt.p, window);
        const MixtureQsd eta = mixture_qsd(spec, k_eff);
        const QsdResidual res = qsd_residual(eta, kernel);
        TestReport r;
        r.name = "qsd/comb-residual";
        r.method = "exact";
        r.statistic = res.l1;
        r.level = 1e-8;
        r.n1 = k_eff;
        r.seed = rng.key();
        r.params = param_echo(opt, {"x0", "p", "q", "K"}) + ";k_eff=" + std::to_string(k_eff);
        r.notes = "leak=" + format_double(res.leak_bound) +
                  ";d=" + format_double(eta.d) +
                  ";c=" + format_double(1.0 / (1.0 + eta.d)) +
                  ";tail=" + format_double(eta.tail_mass);
        r.verdict = (res.l1 < 1e-8 && res.leak_bound < 1e-10) ? "pass" : "fail";
        reports.push_back(r);

        if (!opt.eta_out_path.empty()) {
            std::ofstream f(opt.eta_out_path, std::ios::binary);
            if (!f) {
                std::cerr << "error: cannot open " << opt.eta_out_path << "\n";
                return 2;
            }
            f << "# " << r.params << ";" << r.notes << ";residual=" << format_double(res.l1)
              << "\n";
            f << "k,eta\n";
            for (int k = 1; k <= eta.k_eff(); ++k)
                f << k << ',' << format_double(eta.at(k)) << "\n";
        }

        // negative control: a single atom is not scale invariant
        const MixtureQsd bad = mixture_qsd(LambdaSpec::atoms({{1.0, 1.0}}), window, opt.q);
        const QsdResidual bad_res = qsd_residual(bad, kernel);
        TestReport rb;
        rb.name = "qsd/single-atom-control";
        rb.method = "exact";
        rb.statistic = bad_res.l1;
        rb.level = 1e-2;
        rb.n1 = window;
        rb.seed = rng.key();
        rb.verdict = bad_res.l1 > 1e-2 ? "pass" : "fail";
        rb.notes = "non-QSD residual must stay large";
        reports.push_back(rb);
    } else {
        std::cerr << "error: unknown suite '" << opt.target << "'\n";
        return 2;
    }
    return emit_reports(opt, reports);
}

int cmd_massproc(const Options& opt) {
    if (opt.step <= 0.0) {
        std::cerr << "error: --step must be > 0\n";
        return 2;
    }
    std::string csv = "t,X,X_c,X_j\n";
    if (opt.horizon <= 0.0) {
        write_output(opt, csv);   // nothing to evaluate
        return 0;
    }
    MassPath path = [&]() -> MassPath {
        if (opt.target == "ray")
            return mass_process(uniform_density_ray(opt.lambda), opt.horizon);
        if (opt.target == "forest") {
            Rng rng = require_seed(opt);
            const LambdaSpec spec = spec_from_options(opt);
            return mass_process(
                poisson_forest_ray(spec, DecorationKernel::unit_point_mass(), rng),
                opt.horizon);
        }
        if (opt.target == "subordinator") {
            Rng rng = require_seed(opt);
            return stable_jump_path(opt.alpha, opt.eps_cutoff, opt.horizon, rng);
        }
        std::cerr << "error: unknown mass-process generator '" << opt.target << "'\n";
        std::exit(2);
    }();
    for (double t = 0.0; t <= opt.horizon + 1e-12; t += opt.step) {
        const double xc = path.continuous_at(t);
        const double xj = path.jump_at(t);
        csv += format_double(t) + "," + format_double(xc + xj) + "," + format_double(xc) + "," +
               format_double(xj) + "\n";
    }
    write_output(opt, csv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"treesim: contraction-invariant random tree toolkit"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", opt.seed, "64-bit seed (required for randomized commands)");
        cmd->add_option("--out", opt.out_path, "output file (default stdout)");
        cmd->add_option("--depth", opt.depth, "truncation depth / radius");
        cmd->add_option("--p", opt.p, "off-spine keep/rescale probability");
        cmd->add_option("--q", opt.q, "spine keep/rescale probability");
        cmd->add_option("--spec", opt.spec_path, "Lambda spec file");
    };

    CLI::App* gen = app.add_subcommand("gen", "sample generators and emit serialized trees");
    gen->add_option("generator", opt.target, "ray | bouquet | forest")->required();
    add_common(gen);
    gen->add_option("--count", opt.count, "number of samples to emit");
    gen->add_option("--gamma", opt.gamma, "bouquet decoration parameter");
    gen->add_option("--lambda", opt.lambda, "uniform density (>= 1)");

    CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("suite", opt.target, "selfsim | commute | compat | corollary | coupling | qsd")
        ->required();
    add_common(verify);
    verify->add_option("--replicates", opt.replicates, "Monte Carlo sample size");
    verify->add_option("--level", opt.level, "significance level");
    verify->add_option("--gamma", opt.gamma, "bouquet decoration parameter");
    verify->add_option("--n", opt.n_big, "compat: larger conditioned size");
    verify->add_option("--m", opt.m_small, "compat: smaller conditioned size");
    verify->add_option("--x0", opt.x0, "comb base size");
    verify->add_option("--nmin", opt.n_min, "comb lower index");
    verify->add_option("--nmax", opt.n_max, "comb upper index");
    verify->add_option("--K", opt.kernel_k, "death kernel truncation / residual window");
    verify->add_option("--powers", opt.powers, "coupling: number of iterated powers");
    verify->add_option("--tv-threshold", opt.tv_threshold, "coupling: final TV bound");
    verify->add_option("--tree", opt.tree_path, "serialized FiniteRTree file");
    verify->add_option("--eta-out", opt.eta_out_path, "qsd: write the eta vector as CSV");
    verify->add_flag("--strict", opt.strict, "treat inconclusive verdicts as failures");

    CLI::App* massproc = app.add_subcommand("massproc", "emit a mass process as CSV");
    massproc->add_option("generator", opt.target, "ray | forest | subordinator")->required();
    add_common(massproc);
    massproc->add_option("--lambda", opt.lambda, "uniform density (>= 1)");
    massproc->add_option("--alpha", opt.alpha, "stable index in (0,1)");
    massproc->add_option("--eps", opt.eps_cutoff, "jump size cutoff");
    massproc->add_option("--horizon", opt.horizon, "evaluation horizon");
    massproc->add_option("--step", opt.step, "grid step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    // comb-backed commands default to a q > p pair unless overridden
    if (verify->parsed() && (opt.target == "corollary" || opt.target == "qsd")) {
        if (verify->count("--p") == 0) opt.p = 0.4;
        if (verify->count("--q") == 0) opt.q = 0.7;
    }
    if (gen->parsed() && opt.target == "forest") {
        if (gen->count("--p") == 0) opt.p = 0.4;
        if (gen->count("--q") == 0) opt.q = 0.7;
    }

    try {
        if (gen->parsed()) return cmd_gen(opt);
        if (verify->parsed()) return cmd_verify(opt);
        if (massproc->parsed()) return cmd_massproc(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
