#include "dhn/network.hpp"

#include "dhn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace dhn {

const char *to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::junction: return "junction";
    case NodeKind::producer_feed: return "producer-feed";
    case NodeKind::producer_return: return "producer-return";
    case NodeKind::consumer_feed: return "consumer-feed";
    case NodeKind::consumer_return: return "consumer-return";
    }
    return "junction";
}

const char *to_string(EdgeKind kind)
{
    switch (kind) {
    case EdgeKind::pipe: return "pipe";
    case EdgeKind::producer: return "producer";
    case EdgeKind::consumer: return "consumer";
    }
    return "pipe";
}

NodeKind node_kind_from_string(const std::string &s)
{
    if (s == "junction") return NodeKind::junction;
    if (s == "producer-feed") return NodeKind::producer_feed;
    if (s == "producer-return") return NodeKind::producer_return;
    if (s == "consumer-feed") return NodeKind::consumer_feed;
    if (s == "consumer-return") return NodeKind::consumer_return;
    throw InputError("unknown node kind '" + s + "'");
}

EdgeKind edge_kind_from_string(const std::string &s)
{
    if (s == "pipe") return EdgeKind::pipe;
    if (s == "producer") return EdgeKind::producer;
    if (s == "consumer") return EdgeKind::consumer;
    throw InputError("unknown edge kind '" + s + "'");
}

void PipeCatalog::validate() const
{
    if (!(d_lb > 0 && d_lb <= d_min && d_min <= d_ub))
        throw InputError("pipe catalog requires 0 < d_lb <= d_min <= d_ub");
    if (!(insulation_ratio > 1))
        throw InputError("insulation ratio must exceed 1");
    for (std::size_t i = 1; i < diameters.size(); ++i)
        if (!(diameters[i] > diameters[i - 1]))
            throw InputError("catalog diameters must be strictly increasing");
}

double PipeCatalog::snap_up(double d) const
{
    for (double c : diameters)
        if (c >= d)
            return c;
    return diameters.empty() ? d : diameters.back();
}

void ConsumerSpec::validate() const
{
    if (!(peak_demand > 0))
        throw InputError("consumer peak demand must be positive");
    if (!(primary_supply_nom > secondary_supply_nom && secondary_supply_nom > secondary_return_nom))
        throw InputError("consumer nominal temperatures must satisfy T1h > T2h > T2c");
    if (!(primary_return_nom > secondary_return_nom))
        throw InputError("consumer nominal primary return must exceed the secondary return");
    if (!(secondary_return_nom > house_temperature))
        throw InputError("consumer secondary return must exceed the indoor temperature");
    if (!(radiator_exponent > 0))
        throw InputError("radiator exponent must be positive");
}

double ConsumerSpec::radiator_lmtd_nominal() const
{
    return lmtd(secondary_supply_nom - house_temperature, secondary_return_nom - house_temperature);
}

void ProducerSpec::validate() const
{
    if (!(max_capacity > 0))
        throw InputError("producer max capacity must be positive");
    if (!(efficiency > 0 && efficiency <= 1))
        throw InputError("producer efficiency must lie in (0, 1]");
    if (!(pump_efficiency > 0 && pump_efficiency <= 1))
        throw InputError("pump efficiency must lie in (0, 1]");
    if (!(supply_temperature > reference_return_temperature))
        throw InputError("producer supply temperature must exceed its reference return temperature");
    if (capex_per_kw < 0 || capex_fixed < 0 || fixed_opex < 0 || heat_price < 0)
        throw InputError("producer prices must be non-negative");
}

double ProducerSpec::max_flow(const FluidProps &fluid) const
{
    return max_capacity / (fluid.rho_cp() * (supply_temperature - reference_return_temperature));
}

double compute_hx_ua(const ConsumerSpec &spec)
{
    const double dt_hot = spec.primary_supply_nom - spec.secondary_supply_nom;
    const double dt_cold = spec.primary_return_nom - spec.secondary_return_nom;
    if (!(dt_hot > 0) || !(dt_cold > 0))
        throw InputError("invalid nominal heat exchanger design: non-positive temperature difference");
    if (!(spec.peak_demand > 0))
        throw InputError("invalid nominal heat exchanger design: non-positive peak demand");
    return spec.peak_demand / lmtd(dt_hot, dt_cold);
}

double nominal_primary_flow(const ConsumerSpec &spec, const FluidProps &fluid)
{
    return spec.peak_demand / (fluid.rho_cp() * (spec.primary_supply_nom - spec.primary_return_nom));
}

double compute_valve_constant(const ConsumerSpec &spec, double nominal_dp, const FluidProps &fluid)
{
    if (!(nominal_dp > 0))
        throw InputError("nominal valve pressure drop must be positive");
    return nominal_primary_flow(spec, fluid) / std::sqrt(nominal_dp);
}

NetworkGraph build_graph(std::vector<Node> nodes, const std::vector<EdgeRecord> &records,
                         const std::string &reference_node,
                         const std::unordered_map<std::string, ConsumerSpec> &consumers,
                         const std::unordered_map<std::string, ProducerSpec> &producers, const FluidProps &fluid,
                         const PipeCatalog &catalog, bool require_connected)
{
    fluid.validate();
    catalog.validate();
    NetworkGraph g;
    g.fluid_ = fluid;
    g.catalog_ = catalog;

    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!g.node_lookup_.emplace(nodes[i].id, i).second)
            throw InputError("duplicate node id '" + nodes[i].id + "'");

    for (const auto &r : records) {
        if (g.edge_lookup_.count(r.id))
            throw InputError("duplicate edge id '" + r.id + "'");
        const auto t = g.node_lookup_.find(r.tail);
        const auto h = g.node_lookup_.find(r.head);
        if (t == g.node_lookup_.end() || h == g.node_lookup_.end())
            throw InputError("dangling edge '" + r.id + "' references unknown node '" +
                             (t == g.node_lookup_.end() ? r.tail : r.head) + "'");
        if (t->second == h->second)
            throw InputError("edge '" + r.id + "' is a self loop");
        if (r.kind == EdgeKind::pipe && !(r.length > 0))
            throw InputError("pipe '" + r.id + "' must have a positive length");
        const auto tk = nodes[t->second].kind, hk = nodes[h->second].kind;
        if (r.kind == EdgeKind::consumer &&
            (tk != NodeKind::consumer_feed || hk != NodeKind::consumer_return))
            throw InputError("consumer edge '" + r.id + "' must run from a consumer-feed to a consumer-return node");
        if (r.kind == EdgeKind::producer &&
            (tk != NodeKind::producer_return || hk != NodeKind::producer_feed))
            throw InputError("producer edge '" + r.id + "' must run from a producer-return to a producer-feed node");

        const std::size_t e = g.edges_.size();
        g.edge_lookup_.emplace(r.id, e);
        g.edges_.push_back({r.id, r.kind, t->second, h->second, r.kind == EdgeKind::pipe ? r.length : 0.0});
    }

    g.entity_index_.resize(g.edges_.size());
    for (std::size_t e = 0; e < g.edges_.size(); ++e) {
        const auto &edge = g.edges_[e];
        switch (edge.kind) {
        case EdgeKind::pipe:
            g.entity_index_[e] = g.pipes_.size();
            g.pipes_.push_back(e);
            break;
        case EdgeKind::consumer: {
            const auto it = consumers.find(edge.id);
            if (it == consumers.end())
                throw InputError("consumer edge '" + edge.id + "' has no consumer spec");
            ConsumerSpec spec = it->second;
            spec.validate();
            spec.ua = compute_hx_ua(spec);
            spec.valve_constant = compute_valve_constant(spec, spec.nominal_dp, fluid);
            g.entity_index_[e] = g.consumers_.size();
            g.consumers_.push_back(e);
            g.consumer_specs_.push_back(spec);
            break;
        }
        case EdgeKind::producer: {
            const auto it = producers.find(edge.id);
            if (it == producers.end())
                throw InputError("producer edge '" + edge.id + "' has no producer spec");
            it->second.validate();
            g.entity_index_[e] = g.producers_.size();
            g.producers_.push_back(e);
            g.producer_specs_.push_back(it->second);
            break;
        }
        }
    }
    for (const auto &[id, spec] : consumers)
        if (!g.edge_lookup_.count(id) || g.edges_[g.edge_lookup_.at(id)].kind != EdgeKind::consumer)
            throw InputError("consumer spec '" + id + "' does not name a consumer edge");
    for (const auto &[id, spec] : producers)
        if (!g.edge_lookup_.count(id) || g.edges_[g.edge_lookup_.at(id)].kind != EdgeKind::producer)
            throw InputError("producer spec '" + id + "' does not name a producer edge");

    g.nodes_ = std::move(nodes);
    const std::size_t n = g.nodes_.size();
    g.in_.assign(n, {});
    g.out_.assign(n, {});
    for (std::size_t e = 0; e < g.edges_.size(); ++e) {
        g.out_[g.edges_[e].tail].push_back(e);
        g.in_[g.edges_[e].head].push_back(e);
    }

    const auto ref = g.node_lookup_.find(reference_node);
    if (ref == g.node_lookup_.end())
        throw InputError("reference node '" + reference_node + "' not found");
    if (g.nodes_[ref->second].kind != NodeKind::producer_return)
        throw InputError("reference node '" + reference_node + "' must be a producer return node");
    g.reference_ = ref->second;

    // weakly connected components, numbered in order of their lowest node
    constexpr auto unset = std::numeric_limits<std::size_t>::max();
    g.component_.assign(n, unset);
    std::size_t n_comp = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (g.component_[s] != unset)
            continue;
        std::queue<std::size_t> todo;
        todo.push(s);
        g.component_[s] = n_comp;
        while (!todo.empty()) {
            const auto v = todo.front();
            todo.pop();
            auto visit = [&](std::size_t w) {
                if (g.component_[w] == unset) {
                    g.component_[w] = n_comp;
                    todo.push(w);
                }
            };
            for (auto e : g.out_[v]) visit(g.edges_[e].head);
            for (auto e : g.in_[v]) visit(g.edges_[e].tail);
        }
        ++n_comp;
    }
    if (require_connected && n_comp > 1) {
        // name a consumer that cannot be reached if there is one
        for (auto e : g.consumers_)
            if (g.component_[g.edges_[e].tail] != g.component_[g.reference_])
                throw InputError("disconnected consumer '" + g.edges_[e].id + "'");
        throw InputError("network graph is not connected");
    }

    g.references_.assign(n_comp, unset);
    g.references_[g.component_[g.reference_]] = g.reference_;
    for (auto e : g.producers_) {
        const auto r = g.edges_[e].tail;
        auto &slot = g.references_[g.component_[r]];
        if (slot == unset)
            slot = r;
    }
    for (auto e : g.consumers_)
        if (g.references_[g.component_[g.edges_[e].tail]] == unset)
            throw InputError("disconnected consumer '" + g.edges_[e].id + "'");
    for (std::size_t v = 0; v < n; ++v)
        if (g.references_[g.component_[v]] == unset)
            g.references_[g.component_[v]] = v;
    return g;
}

NetworkGraph build_network(std::vector<Node> nodes, const std::vector<EdgeRecord> &records,
                           const std::string &reference_node,
                           const std::unordered_map<std::string, ConsumerSpec> &consumers,
                           const std::unordered_map<std::string, ProducerSpec> &producers, const FluidProps &fluid,
                           const PipeCatalog &catalog)
{
    return build_graph(std::move(nodes), records, reference_node, consumers, producers, fluid, catalog, true);
}

std::optional<std::size_t> NetworkGraph::find_node(const std::string &id) const
{
    const auto it = node_lookup_.find(id);
    if (it == node_lookup_.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::size_t> NetworkGraph::find_edge(const std::string &id) const
{
    const auto it = edge_lookup_.find(id);
    if (it == edge_lookup_.end())
        return std::nullopt;
    return it->second;
}

NetworkGraph remove_pipes(const NetworkGraph &graph, const std::vector<bool> &keep_pipe,
                          const std::vector<bool> &keep_consumer)
{
    if (keep_pipe.size() != graph.n_pipes())
        throw InputError("pipe mask size mismatch");
    if (!keep_consumer.empty() && keep_consumer.size() != graph.n_consumers())
        throw InputError("consumer mask size mismatch");
    auto consumer_kept = [&](std::size_t k) { return keep_consumer.empty() || keep_consumer[k]; };
    std::vector<bool> used(graph.n_nodes(), false);
    std::vector<EdgeRecord> records;
    for (std::size_t e = 0; e < graph.n_edges(); ++e) {
        const auto &edge = graph.edge(e);
        if (edge.kind == EdgeKind::pipe && !keep_pipe[graph.entity_index(e)])
            continue;
        if (edge.kind == EdgeKind::consumer && !consumer_kept(graph.entity_index(e)))
            continue;
        used[edge.tail] = used[edge.head] = true;
        records.push_back({edge.id, edge.kind, graph.node(edge.tail).id, graph.node(edge.head).id, edge.length});
    }
    std::vector<Node> nodes;
    for (std::size_t v = 0; v < graph.n_nodes(); ++v)
        if (used[v])
            nodes.push_back(graph.node(v));

    std::unordered_map<std::string, ConsumerSpec> consumers;
    for (std::size_t k = 0; k < graph.n_consumers(); ++k)
        if (consumer_kept(k))
            consumers.emplace(graph.edge(graph.consumer_edges()[k]).id, graph.consumer(k));
    std::unordered_map<std::string, ProducerSpec> producers;
    for (std::size_t k = 0; k < graph.n_producers(); ++k)
        producers.emplace(graph.edge(graph.producer_edges()[k]).id, graph.producer(k));

    // the pruned network may split into several producer-fed components
    return build_graph(std::move(nodes), records, graph.node(graph.reference_node()).id, consumers, producers,
                       graph.fluid(), graph.catalog(), false);
}

DesignLayout::DesignLayout(std::size_t n_pipe, std::size_t n_producer, std::size_t n_consumer, std::size_t n_period)
    : n_pipe_(n_pipe), n_pr_(n_producer), n_con_(n_consumer), n_period_(n_period),
      size_(n_pipe + n_producer + n_period * (n_consumer + n_producer))
{
}

std::size_t DesignLayout::index(const DesignKey &key) const
{
    switch (key.kind) {
    case VariableKind::diameter: return diameter(key.entity);
    case VariableKind::capacity: return capacity(key.entity);
    case VariableKind::valve: return valve(key.period, key.entity);
    case VariableKind::flow: return flow(key.period, key.entity);
    }
    return 0;
}

DesignKey DesignLayout::key(std::size_t i) const
{
    if (i < n_pipe_)
        return {VariableKind::diameter, i, 0};
    i -= n_pipe_;
    if (i < n_pr_)
        return {VariableKind::capacity, i, 0};
    i -= n_pr_;
    const std::size_t block = n_con_ + n_pr_;
    const std::size_t t = i / block;
    const std::size_t r = i % block;
    if (r < n_con_)
        return {VariableKind::valve, r, t};
    return {VariableKind::flow, r - n_con_, t};
}

DesignLayout design_index_map(const NetworkGraph &graph, std::size_t n_period)
{
    return DesignLayout(graph.n_pipes(), graph.n_producers(), graph.n_consumers(), n_period);
}

} // namespace dhn
