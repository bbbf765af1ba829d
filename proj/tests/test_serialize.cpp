#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "treesim/rng.hpp"
#include "treesim/serialize.hpp"

using namespace treesim;

namespace {

FiniteRTree random_rtree(Rng& rng) {
    FiniteRTree t;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
        const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(t.vertex_count())));
        const int v = t.add_edge(parent, rng.uniform() * 3.0, rng.uniform());
        const long atoms = rng.poisson(0.7);
        for (long a = 0; a < atoms; ++a)
            t.add_atom(v, rng.uniform() * t.length(v), 0.1 + rng.uniform());
    }
    if (rng.bernoulli(0.5)) t.set_root_atom(rng.uniform());
    return t;
}

} // namespace

TEST_CASE("rtree text round trip is bit-exact") {
    Rng rng(101);
    for (int i = 0; i < 200; ++i) {
        const FiniteRTree t = random_rtree(rng);
        const std::string text = to_text(t);
        REQUIRE(to_text(parse_rtree(text)) == text);
    }
}

TEST_CASE("rtree text format is the documented grammar") {
    FiniteRTree t;
    const int a = t.add_edge(0, 1.0, 0.5);
    t.add_atom(a, 0.25, 2.0);
    t.add_edge(a, 0.5);
    t.set_root_atom(1.5);
    REQUIRE(to_text(t) ==
            "tree{ rootatom=1.5 (len=1 dens=0.5 atoms=[0.25:2](len=0.5 dens=0 atoms=[]))}");
    const FiniteRTree back = parse_rtree(to_text(t));
    REQUIRE(back.vertex_count() == 3);
    REQUIRE(back.root_atom() == 1.5);
    REQUIRE(back.atoms(1).size() == 1);
}

TEST_CASE("rtree parser rejects malformed input") {
    REQUIRE_THROWS_AS(parse_rtree("tree{ rootatom=0 "), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_rtree("tree{ rootatom=x }"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_rtree("tree{ rootatom=0 (len=1) }"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_rtree("tree{ rootatom=0 } extra"), std::invalid_argument);
}

TEST_CASE("lambda spec files parse and echo") {
    const std::string text =
        "# comment\n"
        "kind=comb\n"
        "x0=1.0\n"
        "p=0.4\n"
        "q=0.7\n"
        "n_min=-3\n"
        "n_max=5\n";
    const LambdaSpecFile f = parse_lambda_spec(text);
    REQUIRE(f.spec.kind() == LambdaSpec::Kind::Comb);
    REQUIRE(f.spec.atom_list().size() == 9);
    REQUIRE(f.echo.at("p") == "0.4");

    const LambdaSpecFile pw =
        parse_lambda_spec("kind=power\nalpha=0.5\neps_cutoff=0.01\nx_max=100\n");
    REQUIRE(pw.spec.kind() == LambdaSpec::Kind::Power);

    const LambdaSpecFile at = parse_lambda_spec("kind=atoms\natoms=1:2,0.5:0.25\n");
    REQUIRE(at.spec.atom_list().size() == 2);
    REQUIRE(at.spec.atom_list()[0].x == 1.0);

    REQUIRE_THROWS_AS(parse_lambda_spec("kind=comb\nx0=1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_lambda_spec("kind=nope\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_lambda_spec("justaline\n"), std::invalid_argument);
}
