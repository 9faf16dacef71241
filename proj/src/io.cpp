#include "cfbound/io.hpp"

#include "cfbound/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cfbound {

using nlohmann::json;

namespace {

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": field '" + key + "': " + e.what());
    }
}

Selector selector_from_json(const json& j) {
    Selector s;
    s.parents = field<std::vector<std::string>>(j, "parents", "selector");
    s.table = field<std::vector<int>>(j, "table", "selector");
    return s;
}

json selector_to_json(const Selector& s) { return json{{"parents", s.parents}, {"table", s.table}}; }

}  // namespace

ModelFile model_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("model: expected a JSON object");
    ScmBuilder b;
    for (const auto& v : field<json>(j, "endogenous", "model")) {
        b.add_endogenous(field<std::string>(v, "name", "endogenous"), field<int>(v, "cardinality", "endogenous"));
    }
    std::vector<std::pair<VarId, std::vector<double>>> pmfs;
    for (const auto& v : field<json>(j, "exogenous", "model")) {
        const auto name = field<std::string>(v, "name", "exogenous");
        const VarId id = b.add_exogenous(name, field<int>(v, "cardinality", "exogenous"));
        if (v.contains("pmf") && !v.at("pmf").is_null()) pmfs.emplace_back(id, field<std::vector<double>>(v, "pmf", name));
    }
    for (auto& [id, p] : pmfs) b.set_pmf(id, std::move(p));

    const json& eqs = field<json>(j, "equations", "model");
    auto add_equation = [&](const std::string& child, const json& e) {
        const auto child_id = b.find(child);
        if (!child_id) throw ParseError("equation for unknown variable '" + child + "'");
        std::vector<VarId> parents;
        for (const auto& p : field<std::vector<std::string>>(e, "parents", child)) {
            const auto pid = b.find(p);
            if (!pid) throw ParseError("equation of '" + child + "': unknown parent '" + p + "'");
            parents.push_back(*pid);
        }
        const bool intervened = e.value("intervened", false);
        b.set_equation(*child_id, std::move(parents), field<std::vector<int>>(e, "table", child), intervened);
    };
    if (eqs.is_object()) {
        for (const auto& [child, e] : eqs.items()) add_equation(child, e);
    } else if (eqs.is_array()) {
        for (const auto& e : eqs) add_equation(field<std::string>(e, "child", "equation"), e);
    } else {
        throw ParseError("model: 'equations' must be an object or an array");
    }
    ModelFile out{b.build(), std::nullopt};
    if (j.contains("selector") && !j.at("selector").is_null()) out.selector = selector_from_json(j.at("selector"));
    if (out.selector) BoundSelector(out.model, *out.selector);  // validates names and table size
    return out;
}

json model_to_json(const Scm& model, const std::optional<Selector>& selector) {
    const Scm m = model.selector() ? strip_selector(model) : model;
    std::optional<Selector> sel = selector;
    if (!sel && model.selector()) sel = extract_selector(model);

    json j;
    j["endogenous"] = json::array();
    j["exogenous"] = json::array();
    j["equations"] = json::object();
    for (VarId v : m.endogenous()) {
        j["endogenous"].push_back({{"name", m.variable(v).name}, {"cardinality", m.cardinality(v)}});
    }
    for (VarId u : m.exogenous()) {
        json e{{"name", m.variable(u).name}, {"cardinality", m.cardinality(u)}};
        if (m.pmf(u)) e["pmf"] = *m.pmf(u);
        j["exogenous"].push_back(std::move(e));
    }
    for (VarId v : m.endogenous()) {
        const auto& eq = m.equation(v);
        std::vector<std::string> parents;
        for (VarId p : eq.parents) parents.push_back(m.variable(p).name);
        json e{{"parents", parents}, {"table", eq.table}};
        if (eq.intervened) e["intervened"] = true;
        j["equations"][m.variable(v).name] = std::move(e);
    }
    if (sel) j["selector"] = selector_to_json(*sel);
    return j;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw ParseError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

ModelFile read_model(const std::filesystem::path& path) {
    const json j = read_json(path);
    try {
        return model_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_model(const std::filesystem::path& path, const Scm& model, const std::optional<Selector>& selector) {
    write_json(path, model_to_json(model, selector));
}

std::vector<Config> parse_csv(std::istream& in, const Scm& model, const std::string& source) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
        }
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };

    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        header = split(line);
        break;
    }
    if (header.empty()) throw ParseError(source + ": missing header row");
    const auto names = model.observed_names();
    if (header.size() != names.size()) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": header has " + std::to_string(header.size()) +
                         " columns, model has " + std::to_string(names.size()) + " observed variables");
    }
    std::vector<int> column_to_position(header.size(), -1);
    std::set<std::string> seen;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto id = model.find(header[c]);
        if (!id || model.observed_ordinal(*id) < 0) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": unknown column '" + header[c] + "'");
        }
        if (!seen.insert(header[c]).second) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate column '" + header[c] + "'");
        }
        column_to_position[c] = model.observed_ordinal(*id);
    }

    std::vector<Config> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (cells.size() != header.size()) throw ParseError(where + ": expected " + std::to_string(header.size()) + " values");
        Config x(header.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size()) throw ParseError(where + ": '" + cells[c] + "' is not an integer");
            const auto pos = static_cast<std::size_t>(column_to_position[c]);
            if (v < 0 || v >= model.cardinality(model.observed()[pos])) {
                throw ParseError(where + ": state " + cells[c] + " out of range for '" + header[c] + "'");
            }
            x[pos] = v;
        }
        rows.push_back(std::move(x));
    }
    return rows;
}

std::vector<Config> read_csv(const std::filesystem::path& path, const Scm& model) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return parse_csv(in, model, path.string());
}

void write_csv(const std::filesystem::path& path, const Scm& model, const std::vector<Config>& rows) {
    std::ostringstream out;
    const auto names = model.observed_names();
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (const auto& x : rows) {
        for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

namespace {

std::vector<WorldLiteral> literals(const json& j, const char* key) {
    std::vector<WorldLiteral> out;
    if (!j.contains(key)) return out;
    for (const auto& l : j.at(key)) {
        out.push_back({field<std::string>(l, "variable", key), field<int>(l, "state", key), l.value("world", 0)});
    }
    return out;
}

json literals_to_json(const std::vector<WorldLiteral>& ls) {
    json out = json::array();
    for (const auto& l : ls) out.push_back({{"variable", l.variable}, {"state", l.state}, {"world", l.world}});
    return out;
}

}  // namespace

CounterfactualQuery query_from_json(const json& j) {
    const auto type = field<std::string>(j, "type", "query");
    if (type == "pns" || type == "pn" || type == "ps") {
        const auto cause = field<std::string>(j, "cause", "query");
        const auto effect = field<std::string>(j, "effect", "query");
        if (type == "pns") return pns_query(cause, effect);
        if (type == "pn") return pn_query(cause, effect);
        return ps_query(cause, effect);
    }
    if (type != "custom") throw ParseError("query: unknown type '" + type + "'");
    CounterfactualQuery q;
    q.antecedents = literals(j, "antecedents");
    q.consequents = literals(j, "consequents");
    if (q.consequents.empty()) throw ParseError("query: custom query without consequents");
    if (j.contains("conditioning")) {
        const json& cj = j.at("conditioning");
        if (cj.is_object()) {
            // {"Z": 0, ...}
            for (const auto& [name, s] : cj.items()) {
                if (!s.is_number_integer()) throw ParseError("conditioning: state of '" + name + "' must be an integer");
                q.conditioning.emplace_back(name, s.get<int>());
            }
        } else {
            for (const auto& c : cj) {
                q.conditioning.emplace_back(field<std::string>(c, "variable", "conditioning"),
                                            field<int>(c, "state", "conditioning"));
            }
        }
    }
    const auto mode = j.value("mode", q.conditioning.empty() ? std::string("joint") : std::string("conditional"));
    if (mode == "joint") {
        q.mode = CounterfactualQuery::Mode::joint;
    } else if (mode == "conditional") {
        q.mode = CounterfactualQuery::Mode::conditional;
    } else {
        throw ParseError("query: unknown mode '" + mode + "'");
    }
    return q;
}

json query_to_json(const CounterfactualQuery& q) {
    json j{{"type", "custom"},
           {"antecedents", literals_to_json(q.antecedents)},
           {"consequents", literals_to_json(q.consequents)},
           {"conditioning", json::array()},
           {"mode", q.mode == CounterfactualQuery::Mode::joint ? "joint" : "conditional"}};
    for (const auto& [v, s] : q.conditioning) j["conditioning"].push_back({{"variable", v}, {"state", s}});
    return j;
}

QueryFile read_query(const std::filesystem::path& path) {
    const json j = read_json(path);
    QueryFile f;
    try {
        f.query = query_from_json(j);
        f.max_worlds = j.value("max_worlds", 2);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return f;
}

json assignment_to_json(const Scm& model, const ExogenousAssignment& a) {
    json j = json::object();
    for (std::size_t i = 0; i < model.exogenous().size(); ++i) j[model.variable(model.exogenous()[i]).name] = a[i];
    return j;
}

ExogenousAssignment assignment_from_json(const Scm& model, const json& j) {
    ExogenousAssignment a;
    for (VarId u : model.exogenous()) {
        const auto& name = model.variable(u).name;
        auto p = field<std::vector<double>>(j, name.c_str(), "pmfs");
        if (p.size() != static_cast<std::size_t>(model.cardinality(u))) {
            throw ParseError("pmfs: wrong length for '" + name + "'");
        }
        normalize_pmf(p, name);
        a.pmfs.push_back(std::move(p));
    }
    return a;
}

}  // namespace cfbound
