#include "dhn/io.hpp"

#include "dhn/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

namespace dhn {

using nlohmann::json;

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string &line, char sep)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

bool parse_double(const std::string &s, double &v)
{
    const char *b = s.data(), *e = s.data() + s.size();
    if (b != e && *b == '+')
        ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    return ec == std::errc() && p == e && std::isfinite(v);
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

template <class T>
T get(const json &j, const char *key, const std::string &where)
{
    if (!j.contains(key))
        throw InputError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw InputError(where + ": field '" + key + "' has the wrong type");
    }
}

template <class T>
void get_opt(const json &j, const char *key, T &v, const std::string &where)
{
    if (j.contains(key)) {
        try {
            v = j.at(key).get<T>();
        } catch (const json::exception &) {
            throw InputError(where + ": field '" + key + "' has the wrong type");
        }
    }
}

double number(const json &v, const std::string &where)
{
    if (!v.is_number())
        throw InputError(where + ": expected a number");
    return v.get<double>();
}

void check_schema(const json &j, const std::string &what)
{
    if (!j.is_object())
        throw InputError(what + ": expected a JSON object");
    const int v = get<int>(j, "schema_version", what);
    if (v != schema_version)
        throw InputError(what + ": unsupported schema_version " + std::to_string(v));
}

json consumer_json(const ConsumerSpec &c)
{
    return {{"peak_demand", c.peak_demand},
            {"primary_supply_nom", c.primary_supply_nom},
            {"primary_return_nom", c.primary_return_nom},
            {"secondary_supply_nom", c.secondary_supply_nom},
            {"secondary_return_nom", c.secondary_return_nom},
            {"house_temperature", c.house_temperature},
            {"radiator_exponent", c.radiator_exponent},
            {"nominal_dp", c.nominal_dp}};
}

ConsumerSpec consumer_from(const json &j, const std::string &where)
{
    ConsumerSpec c;
    c.peak_demand = get<double>(j, "peak_demand", where);
    get_opt(j, "primary_supply_nom", c.primary_supply_nom, where);
    get_opt(j, "primary_return_nom", c.primary_return_nom, where);
    get_opt(j, "secondary_supply_nom", c.secondary_supply_nom, where);
    get_opt(j, "secondary_return_nom", c.secondary_return_nom, where);
    get_opt(j, "house_temperature", c.house_temperature, where);
    get_opt(j, "radiator_exponent", c.radiator_exponent, where);
    get_opt(j, "nominal_dp", c.nominal_dp, where);
    return c;
}

json producer_json(const ProducerSpec &p)
{
    return {{"supply_temperature", p.supply_temperature},
            {"max_capacity", p.max_capacity},
            {"efficiency", p.efficiency},
            {"capex_per_kw", p.capex_per_kw},
            {"capex_fixed", p.capex_fixed},
            {"fixed_opex", p.fixed_opex},
            {"heat_price", p.heat_price},
            {"pump_efficiency", p.pump_efficiency},
            {"reference_return_temperature", p.reference_return_temperature},
            {"waste_heat", p.waste_heat}};
}

ProducerSpec producer_from(const json &j, const std::string &where)
{
    ProducerSpec p;
    p.max_capacity = get<double>(j, "max_capacity", where);
    get_opt(j, "supply_temperature", p.supply_temperature, where);
    get_opt(j, "efficiency", p.efficiency, where);
    get_opt(j, "capex_per_kw", p.capex_per_kw, where);
    get_opt(j, "capex_fixed", p.capex_fixed, where);
    get_opt(j, "fixed_opex", p.fixed_opex, where);
    get_opt(j, "heat_price", p.heat_price, where);
    get_opt(j, "pump_efficiency", p.pump_efficiency, where);
    get_opt(j, "reference_return_temperature", p.reference_return_temperature, where);
    get_opt(j, "waste_heat", p.waste_heat, where);
    return p;
}

bool same_period(const PeriodData &a, const PeriodData &b)
{
    return a.name == b.name && a.ambient_temperature == b.ambient_temperature && a.demand == b.demand &&
           a.weight == b.weight && a.peak == b.peak && a.available == b.available &&
           a.medoid_timestamp == b.medoid_timestamp && a.medoid_index == b.medoid_index;
}

bool same_cost(const CostBreakdown &a, const CostBreakdown &b)
{
    return a.pipe_capex == b.pipe_capex && a.heat_capex == b.heat_capex && a.heat_opex == b.heat_opex &&
           a.pump_opex == b.pump_opex && a.total == b.total && a.period_heat_opex == b.period_heat_opex &&
           a.period_pump_opex == b.period_pump_opex;
}

// minutes since the epoch for "YYYY-MM-DD[ T]HH:MM[:SS]"; nullopt otherwise
std::optional<long> timestamp_minutes(const std::string &s)
{
    int y, mo, d, h, mi;
    char sep;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d", &y, &mo, &d, &sep, &h, &mi) != 6)
        return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        return std::nullopt;
    return static_cast<long>(sys_days(ymd).time_since_epoch().count()) * 1440L + h * 60L + mi;
}

std::string period_file_stem(const std::string &name, std::size_t t)
{
    std::string s;
    for (char c : name)
        s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
    return s.empty() ? "period" + std::to_string(t) : s;
}

} // namespace

// ---- network ------------------------------------------------------------

NetworkGraph network_from_json(const json &j)
{
    check_schema(j, "network");
    FluidProps fluid;
    if (j.contains("fluid")) {
        const auto &f = j.at("fluid");
        get_opt(f, "density", fluid.density, "fluid");
        get_opt(f, "viscosity", fluid.viscosity, "fluid");
        get_opt(f, "heat_capacity", fluid.heat_capacity, "fluid");
        get_opt(f, "ground_conductivity", fluid.ground_conductivity, "fluid");
        get_opt(f, "insulation_conductivity", fluid.insulation_conductivity, "fluid");
        get_opt(f, "burial_depth", fluid.burial_depth, "fluid");
    }
    PipeCatalog catalog;
    if (j.contains("catalog")) {
        const auto &c = j.at("catalog");
        get_opt(c, "d_min", catalog.d_min, "catalog");
        get_opt(c, "d_lb", catalog.d_lb, "catalog");
        get_opt(c, "d_ub", catalog.d_ub, "catalog");
        get_opt(c, "insulation_ratio", catalog.insulation_ratio, "catalog");
        get_opt(c, "diameters", catalog.diameters, "catalog");
    }

    std::vector<Node> nodes;
    for (const auto &n : get<json>(j, "nodes", "network")) {
        Node node;
        node.id = get<std::string>(n, "id", "node");
        node.kind = node_kind_from_string(get<std::string>(n, "kind", "node '" + node.id + "'"));
        get_opt(n, "x", node.x, "node '" + node.id + "'");
        get_opt(n, "y", node.y, "node '" + node.id + "'");
        nodes.push_back(node);
    }
    std::vector<EdgeRecord> edges;
    for (const auto &e : get<json>(j, "edges", "network")) {
        EdgeRecord r;
        r.id = get<std::string>(e, "id", "edge");
        const std::string where = "edge '" + r.id + "'";
        r.kind = edge_kind_from_string(get<std::string>(e, "kind", where));
        r.tail = get<std::string>(e, "tail", where);
        r.head = get<std::string>(e, "head", where);
        get_opt(e, "length", r.length, where);
        edges.push_back(r);
    }
    std::unordered_map<std::string, ConsumerSpec> consumers;
    if (j.contains("consumers"))
        for (const auto &[id, spec] : j.at("consumers").items())
            consumers[id] = consumer_from(spec, "consumer '" + id + "'");
    std::unordered_map<std::string, ProducerSpec> producers;
    if (j.contains("producers"))
        for (const auto &[id, spec] : j.at("producers").items())
            producers[id] = producer_from(spec, "producer '" + id + "'");
    return build_network(std::move(nodes), edges, get<std::string>(j, "reference_node", "network"), consumers,
                         producers, fluid, catalog);
}

json network_to_json(const NetworkGraph &g)
{
    json j;
    j["schema_version"] = schema_version;
    j["reference_node"] = g.node(g.reference_node()).id;
    const auto &f = g.fluid();
    j["fluid"] = {{"density", f.density},
                  {"viscosity", f.viscosity},
                  {"heat_capacity", f.heat_capacity},
                  {"ground_conductivity", f.ground_conductivity},
                  {"insulation_conductivity", f.insulation_conductivity},
                  {"burial_depth", f.burial_depth}};
    const auto &c = g.catalog();
    j["catalog"] = {{"d_min", c.d_min},
                    {"d_lb", c.d_lb},
                    {"d_ub", c.d_ub},
                    {"insulation_ratio", c.insulation_ratio},
                    {"diameters", c.diameters}};
    j["nodes"] = json::array();
    for (const auto &n : g.nodes())
        j["nodes"].push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"x", n.x}, {"y", n.y}});
    j["edges"] = json::array();
    for (const auto &e : g.edges()) {
        json r{{"id", e.id}, {"kind", to_string(e.kind)}, {"tail", g.node(e.tail).id}, {"head", g.node(e.head).id}};
        if (e.kind == EdgeKind::pipe)
            r["length"] = e.length;
        j["edges"].push_back(r);
    }
    j["consumers"] = json::object();
    for (std::size_t k = 0; k < g.n_consumers(); ++k)
        j["consumers"][g.edge(g.consumer_edges()[k]).id] = consumer_json(g.consumer(k));
    j["producers"] = json::object();
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        j["producers"][g.edge(g.producer_edges()[k]).id] = producer_json(g.producer(k));
    return j;
}

NetworkGraph read_network(const std::filesystem::path &path)
{
    return network_from_json(read_json(path, "network"));
}

void write_network(const std::filesystem::path &path, const NetworkGraph &graph)
{
    write_json(path, network_to_json(graph));
}

// ---- time series --------------------------------------------------------

RawSeries parse_series_csv(std::istream &in, const std::string &source)
{
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split(trim(line), ',');
            break;
        }
    }
    if (header.size() < 3)
        throw InputError(source + ": line " + std::to_string(line_no) +
                         ": header needs a timestamp, at least one consumer and a temperature column");
    std::size_t temp_col = header.size();
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto h = lower(header[c]);
        if (h == "temperature" || h == "ambient_temperature" || h == "t_amb") {
            if (temp_col != header.size())
                throw InputError(source + ": more than one temperature column");
            temp_col = c;
        }
    }
    if (temp_col == header.size())
        throw InputError(source + ": no temperature column");

    RawSeries s;
    std::vector<std::size_t> cols;
    for (std::size_t c = 1; c < header.size(); ++c)
        if (c != temp_col) {
            if (header[c].empty())
                throw InputError(source + ": empty consumer column name");
            s.consumer_ids.push_back(header[c]);
            cols.push_back(c);
        }
    s.demand.assign(cols.size(), {});

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split(trim(line), ',');
        const std::string where = source + ": line " + std::to_string(line_no);
        if (cells.size() != header.size())
            throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(cells.size()));
        double v;
        if (!parse_double(cells[temp_col], v))
            throw InputError(where + ": temperature '" + cells[temp_col] + "' is not a number");
        s.temperature.push_back(v);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (!parse_double(cells[cols[k]], v))
                throw InputError(where + ": demand '" + cells[cols[k]] + "' of '" + s.consumer_ids[k] +
                                 "' is not a number");
            if (v < 0)
                throw InputError(where + ": negative demand for '" + s.consumer_ids[k] + "'");
            s.demand[k].push_back(v);
        }
        s.timestamps.push_back(cells[0]);
    }
    if (s.temperature.empty())
        throw InputError(source + ": no data rows");
    if (s.timestamps.size() >= 2) {
        const auto a = timestamp_minutes(s.timestamps[0]), b = timestamp_minutes(s.timestamps[1]);
        if (a && b && *b > *a)
            s.step_hours = static_cast<double>(*b - *a) / 60.0;
    }
    s.validate();
    return s;
}

RawSeries read_series_csv(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("series file not found: " + path.string());
    return parse_series_csv(in, path.string());
}

void write_series_csv(std::ostream &out, const RawSeries &s)
{
    out << "timestamp";
    for (const auto &id : s.consumer_ids)
        out << ',' << id;
    out << ",temperature\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < s.length(); ++i) {
        out << (i < s.timestamps.size() ? s.timestamps[i] : std::to_string(i));
        for (const auto &d : s.demand)
            out << ',' << d[i];
        out << ',' << s.temperature[i] << '\n';
    }
}

// ---- periods ------------------------------------------------------------

bool PeriodsFile::operator==(const PeriodsFile &o) const
{
    if (consumer_ids != o.consumer_ids || unavailable != o.unavailable ||
        periods.active_hours != o.periods.active_hours || periods.size() != o.periods.size())
        return false;
    for (std::size_t t = 0; t < periods.size(); ++t)
        if (!same_period(periods.periods[t], o.periods.periods[t]))
            return false;
    return true;
}

PeriodsFile periods_from_aggregation(const Aggregation &a, const std::vector<std::string> &consumer_ids)
{
    PeriodsFile f;
    f.consumer_ids = consumer_ids;
    f.periods = a.periods;
    f.unavailable.assign(a.periods.size(), {});
    return f;
}

PeriodsFile periods_from_json(const json &j)
{
    check_schema(j, "periods");
    PeriodsFile f;
    f.periods.active_hours = get<double>(j, "active_hours", "periods");
    f.consumer_ids = get<std::vector<std::string>>(j, "consumer_ids", "periods");
    for (const auto &p : get<json>(j, "periods", "periods")) {
        PeriodData d;
        d.name = get<std::string>(p, "name", "period");
        const std::string where = "period '" + d.name + "'";
        d.weight = get<double>(p, "weight", where);
        d.ambient_temperature = get<double>(p, "ambient_temperature", where);
        d.demand = get<std::vector<double>>(p, "demand", where);
        get_opt(p, "peak", d.peak, where);
        get_opt(p, "medoid_index", d.medoid_index, where);
        get_opt(p, "medoid_timestamp", d.medoid_timestamp, where);
        if (d.demand.size() != f.consumer_ids.size())
            throw InputError(where + ": demand has " + std::to_string(d.demand.size()) + " entries for " +
                             std::to_string(f.consumer_ids.size()) + " consumers");
        std::vector<std::string> off;
        get_opt(p, "unavailable", off, where);
        f.unavailable.push_back(off);
        f.periods.periods.push_back(d);
    }
    if (f.periods.periods.empty())
        throw InputError("periods: no periods");
    return f;
}

json periods_to_json(const PeriodsFile &f)
{
    json j;
    j["schema_version"] = schema_version;
    j["active_hours"] = f.periods.active_hours;
    j["consumer_ids"] = f.consumer_ids;
    j["periods"] = json::array();
    for (std::size_t t = 0; t < f.periods.size(); ++t) {
        const auto &p = f.periods.periods[t];
        json r{{"name", p.name},
               {"weight", p.weight},
               {"ambient_temperature", p.ambient_temperature},
               {"peak", p.peak},
               {"demand", p.demand}};
        if (p.medoid_index >= 0)
            r["medoid_index"] = p.medoid_index;
        if (!p.medoid_timestamp.empty())
            r["medoid_timestamp"] = p.medoid_timestamp;
        if (t < f.unavailable.size() && !f.unavailable[t].empty())
            r["unavailable"] = f.unavailable[t];
        j["periods"].push_back(r);
    }
    return j;
}

PeriodsFile read_periods(const std::filesystem::path &path) { return periods_from_json(read_json(path, "periods")); }

void write_periods(const std::filesystem::path &path, const PeriodsFile &f) { write_json(path, periods_to_json(f)); }

PeriodSet bind_periods(const PeriodsFile &f, const NetworkGraph &g)
{
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < f.consumer_ids.size(); ++i)
        col[f.consumer_ids[i]] = i;
    PeriodSet out;
    out.active_hours = f.periods.active_hours;
    for (std::size_t t = 0; t < f.periods.size(); ++t) {
        PeriodData p = f.periods.periods[t];
        p.demand.assign(g.n_consumers(), 0.0);
        for (std::size_t k = 0; k < g.n_consumers(); ++k) {
            const auto &id = g.edge(g.consumer_edges()[k]).id;
            const auto it = col.find(id);
            if (it == col.end())
                throw InputError("periods: no demand for consumer '" + id + "'");
            p.demand[k] = f.periods.periods[t].demand[it->second];
        }
        p.available.clear();
        if (t < f.unavailable.size() && !f.unavailable[t].empty()) {
            p.available.assign(g.n_producers(), true);
            for (const auto &id : f.unavailable[t]) {
                const auto e = g.find_edge(id);
                if (!e || g.edge(*e).kind != EdgeKind::producer)
                    throw InputError("periods: unknown producer '" + id + "' in period '" + p.name + "'");
                p.available[g.entity_index(*e)] = false;
            }
        }
        out.periods.push_back(std::move(p));
    }
    out.validate(g.n_consumers(), g.n_producers());
    return out;
}

void mask_producer_at_peak(PeriodsFile &f, const NetworkGraph &g, const std::string &id)
{
    const auto e = g.find_edge(id);
    if (!e || g.edge(*e).kind != EdgeKind::producer)
        throw InputError("unknown producer '" + id + "'");
    f.unavailable.resize(f.periods.size());
    bool any = false;
    for (std::size_t t = 0; t < f.periods.size(); ++t)
        if (f.periods.periods[t].peak) {
            any = true;
            auto &u = f.unavailable[t];
            if (std::find(u.begin(), u.end(), id) == u.end())
                u.push_back(id);
        }
    if (!any)
        throw InputError("the period set has no peak period to mask");
}

// ---- design -------------------------------------------------------------

json design_to_json(const NetworkGraph &g, const DesignVector &x, const PeriodSet &periods)
{
    json j;
    j["schema_version"] = schema_version;
    j["pipes"] = json::object();
    for (std::size_t k = 0; k < g.n_pipes(); ++k)
        if (x.d(k) > 0)
            j["pipes"][g.edge(g.pipe_edges()[k]).id] = x.d(k);
    j["capacity"] = json::object();
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        j["capacity"][g.edge(g.producer_edges()[k]).id] = x.phi(k);
    j["periods"] = json::array();
    for (std::size_t t = 0; t < x.layout.n_periods(); ++t) {
        json p;
        p["name"] = t < periods.size() ? periods.periods[t].name : "p" + std::to_string(t + 1);
        p["valves"] = json::object();
        for (std::size_t k = 0; k < g.n_consumers(); ++k)
            p["valves"][g.edge(g.consumer_edges()[k]).id] = x.alpha(t, k);
        p["flows"] = json::object();
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            p["flows"][g.edge(g.producer_edges()[k]).id] = x.gamma(t, k);
        j["periods"].push_back(p);
    }
    return j;
}

DesignVector design_from_json(const json &j, const NetworkGraph &g, std::size_t n_periods)
{
    check_schema(j, "design");
    DesignVector x(design_index_map(g, n_periods));
    auto resolve = [&](const std::string &id, EdgeKind kind, const char *what) {
        const auto e = g.find_edge(id);
        if (!e || g.edge(*e).kind != kind)
            throw InputError(std::string("design: unknown ") + what + " '" + id + "'");
        return g.entity_index(*e);
    };
    const auto pipes = get<json>(j, "pipes", "design");
    const auto capacity = get<json>(j, "capacity", "design");
    for (const auto &[id, v] : pipes.items())
        x.d(resolve(id, EdgeKind::pipe, "pipe")) = number(v, "design pipe '" + id + "'");
    for (const auto &[id, v] : capacity.items())
        x.phi(resolve(id, EdgeKind::producer, "producer")) = number(v, "design capacity '" + id + "'");
    const auto ps = get<json>(j, "periods", "design");
    if (ps.size() != n_periods)
        throw InputError("design: " + std::to_string(ps.size()) + " operating periods for a set of " +
                         std::to_string(n_periods));
    for (std::size_t t = 0; t < n_periods; ++t) {
        std::vector<char> seen(g.n_consumers(), 0);
        const auto valves = get<json>(ps[t], "valves", "design period");
        const auto flows = get<json>(ps[t], "flows", "design period");
        for (const auto &[id, v] : valves.items()) {
            const auto k = resolve(id, EdgeKind::consumer, "consumer");
            x.alpha(t, k) = number(v, "design valve '" + id + "'");
            seen[k] = 1;
        }
        // consumers without a valve entry were removed by rounding; keep them closed
        for (std::size_t k = 0; k < g.n_consumers(); ++k)
            if (!seen[k])
                x.alpha(t, k) = 0.0;
        for (const auto &[id, v] : flows.items())
            x.gamma(t, resolve(id, EdgeKind::producer, "producer")) = number(v, "design flow '" + id + "'");
    }
    return x;
}

DesignVector read_design(const std::filesystem::path &path, const NetworkGraph &g, std::size_t n_periods)
{
    return design_from_json(read_json(path, "design"), g, n_periods);
}

// ---- run configuration --------------------------------------------------

RunConfig parse_config(std::istream &in, const std::string &source)
{
    RunConfig rc;
    auto &e = rc.econ;
    auto &o = rc.optimizer;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const auto body = trim(line.substr(0, hash));
        if (body.empty() || body.front() == '[') // section headers are accepted and ignored
            continue;
        const std::string where = source + ": line " + std::to_string(line_no);
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw InputError(where + ": expected key = value");
        const auto key = trim(body.substr(0, eq));
        auto value = trim(body.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);

        auto num = [&] {
            double v;
            if (!parse_double(value, v))
                throw InputError(where + ": '" + key + "' expects a number, got '" + value + "'");
            return v;
        };
        auto integer = [&] {
            const double v = num();
            if (v != std::floor(v))
                throw InputError(where + ": '" + key + "' expects an integer");
            return static_cast<int>(v);
        };
        auto boolean = [&] {
            const auto v = lower(value);
            if (v == "true" || v == "1" || v == "yes")
                return true;
            if (v == "false" || v == "0" || v == "no")
                return false;
            throw InputError(where + ": '" + key + "' expects true or false");
        };
        auto list = [&] {
            auto v = value;
            if (!v.empty() && v.front() == '[')
                v = v.substr(1);
            if (!v.empty() && v.back() == ']')
                v.pop_back();
            std::vector<double> out;
            for (const auto &c : split(v, ',')) {
                double d;
                if (!parse_double(c, d))
                    throw InputError(where + ": '" + key + "' expects a list of numbers");
                out.push_back(d);
            }
            return out;
        };

        if (key == "horizon_years") e.horizon_years = num();
        else if (key == "discount_rate") e.discount_rate = num();
        else if (key == "kappa0") e.kappa0 = num();
        else if (key == "kappa1") e.kappa1 = num();
        else if (key == "pump_price") e.pump_price = num();
        else if (key == "max_pressure") e.max_pressure = num();
        else if (key == "offset_mode") e.offset_mode = boolean();
        else if (key == "xi_schedule") o.xi_schedule = list();
        else if (key == "penalty_init") o.penalty_init = num();
        else if (key == "penalty_growth") o.penalty_growth = num();
        else if (key == "penalty_max") o.penalty_max = num();
        else if (key == "inner_tolerance") o.inner_tolerance = num();
        else if (key == "stall_tolerance") o.stall_tolerance = num();
        else if (key == "settle_tolerance") o.settle_tolerance = num();
        else if (key == "outer_tolerance") o.outer_tolerance = num();
        else if (key == "max_outer") o.max_outer = integer();
        else if (key == "max_inner") o.max_inner = integer();
        else if (key == "memory") o.memory = integer();
        else if (key == "max_step") o.max_step = num();
        else if (key == "removal_threshold") o.removal_threshold = num();
        else if (key == "threads") o.threads = integer();
        else if (key == "newton_tolerance") o.solver.tolerance = num();
        else if (key == "newton_max_iterations") o.solver.max_iterations = integer();
        else if (key == "snap_to_catalog") rc.snap_to_catalog = boolean();
        else
            throw InputError(where + ": unknown key '" + key + "'");
    }
    if (!o.xi_schedule.empty())
        e.xi = o.xi_schedule.front();
    e.validate();
    o.validate();
    return rc;
}

RunConfig read_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("config file not found: " + path.string());
    return parse_config(in, path.string());
}

// ---- metrics ------------------------------------------------------------

double waste_heat_share(const std::vector<std::vector<double>> &heat, const std::vector<double> &weights,
                        const std::vector<bool> &waste)
{
    if (heat.size() != weights.size())
        throw InputError("waste heat share: one weight per period required");
    double total = 0.0, from_waste = 0.0;
    for (std::size_t t = 0; t < heat.size(); ++t) {
        if (heat[t].size() != waste.size())
            throw InputError("waste heat share: one label per producer required");
        for (std::size_t k = 0; k < waste.size(); ++k) {
            const double q = weights[t] * std::max(0.0, heat[t][k]);
            total += q;
            if (waste[k])
                from_waste += q;
        }
    }
    if (!(total > 0))
        throw InputError("waste heat share: no heat delivered");
    return 100.0 * from_waste / total;
}

double average_installed_diameter(const std::vector<double> &d, const std::vector<double> &length)
{
    if (d.size() != length.size())
        throw InputError("average diameter: one length per pipe required");
    double dl = 0.0, l = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k)
        if (d[k] > 0) {
            dl += d[k] * length[k];
            l += length[k];
        }
    if (!(l > 0))
        throw InputError("average diameter: no installed pipes");
    return 100.0 * dl / l;
}

std::vector<std::vector<double>> producer_heat(const NetworkGraph &g, const PeriodSet &periods,
                                               const std::vector<PeriodState> &states,
                                               const ModelOptions &options)
{
    std::vector<std::vector<double>> out(periods.size(), std::vector<double>(g.n_producers(), 0.0));
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const PeriodModel model(g, periods.periods[t], t, options);
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            out[t][k] = producer_output(model, states[t].x, k);
    }
    return out;
}

bool Report::operator==(const Report &o) const
{
    return same_cost(cost, o.cost) && optimizer_cost == o.optimizer_cost && waste_heat_share == o.waste_heat_share &&
           average_diameter_cm == o.average_diameter_cm && discreteness == o.discreteness &&
           max_violation == o.max_violation && converged == o.converged && message == o.message &&
           removed_pipes == o.removed_pipes && removed_consumers == o.removed_consumers &&
           producers == o.producers && periods == o.periods;
}

Report make_report(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods,
                   const Simulation &sim, const EconomicParams &econ, const ModelOptions &options)
{
    Report r;
    r.cost = sim.cost;
    r.converged = sim.converged;
    r.max_violation = sim.max_violation;

    const auto heat = producer_heat(g, periods, sim.states, options);
    std::vector<double> w;
    for (const auto &p : periods.periods)
        w.push_back(p.weight);
    std::vector<bool> waste;
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        waste.push_back(g.producer(k).waste_heat);
    r.waste_heat_share = waste_heat_share(heat, w, waste);

    std::vector<double> d, len;
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        d.push_back(design.d(k));
        len.push_back(g.edge(g.pipe_edges()[k]).length);
    }
    r.average_diameter_cm = g.n_pipes() > 0 ? average_installed_diameter(d, len) : 0.0;
    r.discreteness = discreteness_metric(d, g.catalog().d_min, 0.0);

    double wsum = 0.0;
    for (double v : w)
        wsum += v;
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        ProducerSummary s;
        s.id = g.edge(g.producer_edges()[k]).id;
        s.waste_heat = g.producer(k).waste_heat;
        s.capacity = design.phi(k) * g.producer(k).max_capacity;
        double mean = 0.0;
        for (std::size_t t = 0; t < periods.size(); ++t)
            mean += w[t] * heat[t][k];
        if (wsum > 0)
            mean /= wsum;
        s.capacity_factor = s.capacity > 0 ? mean / s.capacity : 0.0;
        r.producers.push_back(s);
    }

    const StateLayout L(g);
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const auto &p = periods.periods[t];
        const auto &x = sim.states[t].x;
        const PeriodModel model(g, p, t, options);
        PeriodSummary s;
        s.name = p.name;
        s.weight = p.weight;
        s.converged = sim.states[t].report.converged;
        s.residual = sim.states[t].report.residual_inf;
        s.min_supply_temperature = std::numeric_limits<double>::infinity();
        s.max_supply_temperature = -std::numeric_limits<double>::infinity();
        for (auto e : g.consumer_edges()) {
            const double th = x[ix(L.theta_node(g.edge(e).tail))] + p.ambient_temperature;
            s.min_supply_temperature = std::min(s.min_supply_temperature, th);
            s.max_supply_temperature = std::max(s.max_supply_temperature, th);
        }
        if (g.n_consumers() == 0)
            s.min_supply_temperature = s.max_supply_temperature = 0.0;
        for (auto e : g.producer_edges()) {
            const auto &edge = g.edge(e);
            s.max_pressure_lift = std::max(s.max_pressure_lift, x[ix(L.p(edge.head))] - x[ix(L.p(edge.tail))]);
            s.total_flow += x[ix(L.q(e))];
        }
        for (std::size_t k = 0; k < g.n_pipes(); ++k)
            s.heat_loss += model.pipe_heat_loss(k, x);
        s.producer_heat = heat[t];
        s.constraint_margin = -std::numeric_limits<double>::infinity();
        const auto &h = sim.constraints[t];
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            const bool pressure_row = i >= ix(g.n_consumers()) && i < ix(g.n_consumers() + g.n_producers());
            s.constraint_margin = std::max(s.constraint_margin, pressure_row ? h[i] / econ.max_pressure : h[i]);
        }
        if (h.size() == 0)
            s.constraint_margin = 0.0;
        r.periods.push_back(s);
    }
    return r;
}

json report_to_json(const Report &r)
{
    json j;
    j["schema_version"] = schema_version;
    j["cost"] = {{"total", r.cost.total},
                 {"pipe_capex", r.cost.pipe_capex},
                 {"heat_capex", r.cost.heat_capex},
                 {"heat_opex", r.cost.heat_opex},
                 {"pump_opex", r.cost.pump_opex},
                 {"period_heat_opex", r.cost.period_heat_opex},
                 {"period_pump_opex", r.cost.period_pump_opex}};
    j["optimizer_cost"] = r.optimizer_cost;
    j["waste_heat_share"] = r.waste_heat_share;
    j["average_diameter_cm"] = r.average_diameter_cm;
    j["discreteness"] = r.discreteness;
    j["max_violation"] = r.max_violation;
    j["converged"] = r.converged;
    j["message"] = r.message;
    j["removed_pipes"] = r.removed_pipes;
    j["removed_consumers"] = r.removed_consumers;
    j["producers"] = json::array();
    for (const auto &p : r.producers)
        j["producers"].push_back({{"id", p.id},
                                  {"waste_heat", p.waste_heat},
                                  {"capacity", p.capacity},
                                  {"capacity_factor", p.capacity_factor}});
    j["periods"] = json::array();
    for (const auto &p : r.periods)
        j["periods"].push_back({{"name", p.name},
                                {"weight", p.weight},
                                {"converged", p.converged},
                                {"residual", p.residual},
                                {"min_supply_temperature", p.min_supply_temperature},
                                {"max_supply_temperature", p.max_supply_temperature},
                                {"max_pressure_lift", p.max_pressure_lift},
                                {"total_flow", p.total_flow},
                                {"heat_loss", p.heat_loss},
                                {"producer_heat", p.producer_heat},
                                {"constraint_margin", p.constraint_margin}});
    return j;
}

Report report_from_json(const json &j)
{
    check_schema(j, "report");
    Report r;
    const auto c = get<json>(j, "cost", "report");
    r.cost.total = get<double>(c, "total", "report cost");
    r.cost.pipe_capex = get<double>(c, "pipe_capex", "report cost");
    r.cost.heat_capex = get<double>(c, "heat_capex", "report cost");
    r.cost.heat_opex = get<double>(c, "heat_opex", "report cost");
    r.cost.pump_opex = get<double>(c, "pump_opex", "report cost");
    r.cost.period_heat_opex = get<std::vector<double>>(c, "period_heat_opex", "report cost");
    r.cost.period_pump_opex = get<std::vector<double>>(c, "period_pump_opex", "report cost");
    r.optimizer_cost = get<double>(j, "optimizer_cost", "report");
    r.waste_heat_share = get<double>(j, "waste_heat_share", "report");
    r.average_diameter_cm = get<double>(j, "average_diameter_cm", "report");
    r.discreteness = get<double>(j, "discreteness", "report");
    r.max_violation = get<double>(j, "max_violation", "report");
    r.converged = get<bool>(j, "converged", "report");
    r.message = get<std::string>(j, "message", "report");
    r.removed_pipes = get<std::vector<std::string>>(j, "removed_pipes", "report");
    r.removed_consumers = get<std::vector<std::string>>(j, "removed_consumers", "report");
    for (const auto &p : get<json>(j, "producers", "report"))
        r.producers.push_back({get<std::string>(p, "id", "producer"), get<bool>(p, "waste_heat", "producer"),
                               get<double>(p, "capacity", "producer"), get<double>(p, "capacity_factor", "producer")});
    for (const auto &p : get<json>(j, "periods", "report")) {
        PeriodSummary s;
        s.name = get<std::string>(p, "name", "period");
        s.weight = get<double>(p, "weight", s.name);
        s.converged = get<bool>(p, "converged", s.name);
        s.residual = get<double>(p, "residual", s.name);
        s.min_supply_temperature = get<double>(p, "min_supply_temperature", s.name);
        s.max_supply_temperature = get<double>(p, "max_supply_temperature", s.name);
        s.max_pressure_lift = get<double>(p, "max_pressure_lift", s.name);
        s.total_flow = get<double>(p, "total_flow", s.name);
        s.heat_loss = get<double>(p, "heat_loss", s.name);
        s.producer_heat = get<std::vector<double>>(p, "producer_heat", s.name);
        s.constraint_margin = get<double>(p, "constraint_margin", s.name);
        r.periods.push_back(s);
    }
    return r;
}

void write_trace_csv(std::ostream &out, const std::vector<TraceEntry> &trace)
{
    out << "xi,outer,inner_iterations,cost,violation,merit,projected_gradient,penalty,discreteness\n";
    out << std::setprecision(17);
    for (const auto &e : trace)
        out << e.xi << ',' << e.outer << ',' << e.inner_iterations << ',' << e.cost << ',' << e.violation << ','
            << e.merit << ',' << e.projected_gradient << ',' << e.penalty << ',' << e.discreteness << '\n';
}

std::vector<TraceEntry> parse_trace_csv(std::istream &in)
{
    std::vector<TraceEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || trim(line).empty())
            continue;
        const auto c = split(trim(line), ',');
        double v[9];
        if (c.size() != 9)
            throw InputError("trace: line " + std::to_string(line_no) + ": expected 9 fields");
        for (std::size_t i = 0; i < 9; ++i)
            if (!parse_double(c[i], v[i]))
                throw InputError("trace: line " + std::to_string(line_no) + ": bad number '" + c[i] + "'");
        out.push_back({v[0], static_cast<int>(v[1]), static_cast<int>(v[2]), v[3], v[4], v[5], v[6], v[7], v[8]});
    }
    return out;
}

void write_period_csvs(const std::filesystem::path &dir, const NetworkGraph &g, const DesignVector &design,
                       const PeriodSet &periods, const std::vector<PeriodState> &states)
{
    std::filesystem::create_directories(dir);
    const StateLayout L(g);
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const auto &p = periods.periods[t];
        const auto &x = states[t].x;
        const auto stem = period_file_stem(p.name, t);
        std::ofstream nodes(dir / (stem + "_nodes.csv"));
        nodes << std::setprecision(12) << "id,kind,pressure_pa,temperature_c\n";
        for (std::size_t n = 0; n < g.n_nodes(); ++n)
            nodes << g.node(n).id << ',' << to_string(g.node(n).kind) << ',' << x[ix(L.p(n))] << ','
                  << x[ix(L.theta_node(n))] + p.ambient_temperature << '\n';
        std::ofstream edges(dir / (stem + "_edges.csv"));
        edges << std::setprecision(12) << "id,kind,flow_m3s,temperature_c,diameter_m\n";
        for (std::size_t e = 0; e < g.n_edges(); ++e) {
            const auto &edge = g.edge(e);
            edges << edge.id << ',' << to_string(edge.kind) << ',' << x[ix(L.q(e))] << ','
                  << x[ix(L.theta_edge(e))] + p.ambient_temperature << ',';
            if (edge.kind == EdgeKind::pipe)
                edges << design.d(g.entity_index(e));
            edges << '\n';
        }
    }
}

json network_geojson(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods,
                     const std::vector<PeriodState> &states)
{
    const StateLayout L(g);
    json fc{{"type", "FeatureCollection"}, {"features", json::array()}};
    auto point = [&](std::size_t n) { return json::array({g.node(n).x, g.node(n).y}); };
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const auto &edge = g.edge(e);
        json props{{"id", edge.id}, {"kind", to_string(edge.kind)}};
        json geom;
        if (edge.kind == EdgeKind::pipe) {
            props["length"] = edge.length;
            props["diameter"] = design.d(g.entity_index(e));
            geom = {{"type", "LineString"}, {"coordinates", json::array({point(edge.tail), point(edge.head)})}};
        } else {
            geom = {{"type", "Point"}, {"coordinates", point(edge.tail)}};
            if (edge.kind == EdgeKind::producer)
                props["capacity"] = design.phi(g.entity_index(e)) * g.producer(g.entity_index(e)).max_capacity;
        }
        for (std::size_t t = 0; t < periods.size() && t < states.size(); ++t) {
            props["temperature_" + periods.periods[t].name] =
                states[t].x[ix(L.theta_edge(e))] + periods.periods[t].ambient_temperature;
            props["flow_" + periods.periods[t].name] = states[t].x[ix(L.q(e))];
        }
        fc["features"].push_back({{"type", "Feature"}, {"geometry", geom}, {"properties", props}});
    }
    return fc;
}

void write_bundle(const std::filesystem::path &dir, const Bundle &b)
{
    std::filesystem::create_directories(dir);
    write_json(dir / "design.json", design_to_json(*b.graph, b.design, b.periods));
    write_period_csvs(dir / "periods", *b.graph, b.design, b.periods, b.simulation.states);
    {
        std::ofstream trace(dir / "trace.csv");
        write_trace_csv(trace, b.trace);
    }
    write_json(dir / "report.json", report_to_json(b.report));
    write_json(dir / "network.geojson", network_geojson(*b.graph, b.design, b.periods, b.simulation.states));
}

json read_json(const std::filesystem::path &path, const std::string &what)
{
    std::ifstream in(path);
    if (!in)
        throw InputError(what + " file not found: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw InputError(what + " file " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path &path, const json &j)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace dhn
