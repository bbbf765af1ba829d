#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "treesim/generators.hpp"
#include "treesim/rtree.hpp"

namespace treesim {

// Text form of a FiniteRTree (ASCII, bit-stable round trip):
//   tree{ rootatom=<dec> <child>* }
//   child := (len=<dec> dens=<dec> atoms=[<off>:<mass>,...] <child>*)
// Decimals are emitted with 17 significant digits.

namespace detail {

inline void emit_subtree(const FiniteRTree& t, const std::vector<std::vector<int>>& children,
                         int v, std::string& out) {
    char buf[64];
    for (int c : children[static_cast<std::size_t>(v)]) {
        out += "(len=";
        std::snprintf(buf, sizeof(buf), "%.17g", t.length(c));
        out += buf;
        out += " dens=";
        std::snprintf(buf, sizeof(buf), "%.17g", t.density(c));
        out += buf;
        out += " atoms=[";
        bool first = true;
        for (const auto& a : t.atoms(c)) {
            if (!first) out += ',';
            first = false;
            std::snprintf(buf, sizeof(buf), "%.17g", a.offset);
            out += buf;
            out += ':';
            std::snprintf(buf, sizeof(buf), "%.17g", a.mass);
            out += buf;
        }
        out += ']';
        emit_subtree(t, children, c, out);
        out += ')';
    }
}

struct Cursor {
    std::string_view s;
    std::size_t i = 0;

    void skip_ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool eat(std::string_view tok) {
        skip_ws();
        if (s.substr(i, tok.size()) == tok) {
            i += tok.size();
            return true;
        }
        return false;
    }
    void expect(std::string_view tok) {
        if (!eat(tok))
            throw std::invalid_argument("parse error: expected '" + std::string(tok) +
                                        "' at position " + std::to_string(i));
    }
    double number() {
        skip_ws();
        const char* begin = s.data() + i;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw std::invalid_argument("parse error: expected number");
        i += static_cast<std::size_t>(end - begin);
        return v;
    }
};

inline void parse_children(Cursor& c, FiniteRTree& t, int parent) {
    while (c.eat("(")) {
        c.expect("len=");
        const double len = c.number();
        c.expect("dens=");
        const double dens = c.number();
        c.expect("atoms=[");
        const int v = t.add_edge(parent, len, dens);
        if (!c.eat("]")) {
            do {
                const double off = c.number();
                c.expect(":");
                const double mass = c.number();
                t.add_atom(v, off, mass);
            } while (c.eat(","));
            c.expect("]");
        }
        parse_children(c, t, v);
        c.expect(")");
    }
}

} // namespace detail

inline std::string to_text(const FiniteRTree& t) {
    std::string out = "tree{ rootatom=";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", t.root_atom());
    out += buf;
    out += ' ';
    const auto children = [&] {
        std::vector<std::vector<int>> ch(static_cast<std::size_t>(t.vertex_count()));
        for (int v = 1; v < t.vertex_count(); ++v)
            ch[static_cast<std::size_t>(t.parent(v))].push_back(v);
        return ch;
    }();
    detail::emit_subtree(t, children, 0, out);
    out += '}';
    return out;
}

inline FiniteRTree parse_rtree(std::string_view text) {
    detail::Cursor c{text};
    c.expect("tree{");
    c.expect("rootatom=");
    FiniteRTree t;
    t.set_root_atom(c.number());
    detail::parse_children(c, t, 0);
    c.expect("}");
    c.skip_ws();
    if (c.i != text.size()) throw std::invalid_argument("parse error: trailing input");
    return t;
}

// Lambda spec files: key=value lines ('#' comments allowed). Recognised keys:
// kind (power|comb|atoms), alpha, eps_cutoff, x_max, x0, p, q, n_min, n_max,
// atoms (off:mass,off:mass,...). Original strings are echoed in reports.
struct LambdaSpecFile {
    LambdaSpec spec;
    std::map<std::string, std::string> echo;
};

inline LambdaSpecFile parse_lambda_spec(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string line(text.substr(pos, eol - pos));
        pos = eol + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start])))
            ++start;
        line = line.substr(start);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("spec file: expected key=value, got '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end())
            throw std::invalid_argument("spec file: missing key '" + key + "'");
        return it->second;
    };
    auto num = [&](const std::string& key) { return std::strtod(need(key).c_str(), nullptr); };

    LambdaSpecFile out;
    out.echo = kv;
    const std::string& kind = need("kind");
    if (kind == "power") {
        out.spec = LambdaSpec::power(num("alpha"), num("eps_cutoff"), num("x_max"));
    } else if (kind == "comb") {
        out.spec = LambdaSpec::comb(num("x0"), num("p"), num("q"),
                                    static_cast<int>(num("n_min")),
                                    static_cast<int>(num("n_max")));
    } else if (kind == "atoms") {
        std::vector<LambdaAtom> atoms;
        const std::string& list = need("atoms");
        std::size_t p0 = 0;
        while (p0 < list.size()) {
            std::size_t comma = list.find(',', p0);
            if (comma == std::string::npos) comma = list.size();
            const std::string item = list.substr(p0, comma - p0);
            p0 = comma + 1;
            const std::size_t colon = item.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("spec file: atoms items must be x:weight");
            atoms.push_back(LambdaAtom{std::strtod(item.substr(0, colon).c_str(), nullptr),
                                       std::strtod(item.substr(colon + 1).c_str(), nullptr)});
        }
        out.spec = LambdaSpec::atoms(std::move(atoms));
    } else {
        throw std::invalid_argument("spec file: unknown kind '" + kind + "'");
    }
    return out;
}

} // namespace treesim
