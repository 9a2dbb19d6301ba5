#pragma once

// Network graph, component catalogs and the flat design-vector layout.

#include "dhn/thermo.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dhn {

enum class NodeKind { junction, producer_feed, producer_return, consumer_feed, consumer_return };
enum class EdgeKind { pipe, producer, consumer };

const char *to_string(NodeKind kind);
const char *to_string(EdgeKind kind);
NodeKind node_kind_from_string(const std::string &s);
EdgeKind edge_kind_from_string(const std::string &s);

struct Node {
    std::string id;
    NodeKind kind = NodeKind::junction;
    double x = 0.0;
    double y = 0.0;
};

struct Edge {
    std::string id;
    EdgeKind kind = EdgeKind::pipe;
    std::size_t tail = 0;
    std::size_t head = 0;
    double length = 0.0; // pipes only
};

/// Raw edge record before node ids are resolved.
struct EdgeRecord {
    std::string id;
    EdgeKind kind = EdgeKind::pipe;
    std::string tail;
    std::string head;
    double length = 0.0;
};

struct PipeCatalog {
    double d_min = 0.02;
    double d_lb = 0.005;
    double d_ub = 0.5;
    double insulation_ratio = 1.87;
    std::vector<double> diameters{0.02, 0.025, 0.032, 0.04, 0.05, 0.065, 0.08, 0.1, 0.125, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5};

    void validate() const;
    /// Smallest catalog diameter >= d (largest entry if none).
    double snap_up(double d) const;
};

/// Consumer substation design data. Temperatures are absolute [degC].
struct ConsumerSpec {
    double peak_demand = 0.0; // W
    double primary_supply_nom = 60.0;
    double primary_return_nom = 42.0;
    double secondary_supply_nom = 55.0;
    double secondary_return_nom = 40.0;
    double house_temperature = 20.0;
    double radiator_exponent = 1.3;
    double nominal_dp = 0.5e5; // Pa across the control valve at nominal flow

    // derived by build_network
    double ua = 0.0;             // W/K
    double valve_constant = 0.0; // m^3/(s Pa^0.5)

    void validate() const;
    /// LMTD of the radiators at nominal operation.
    double radiator_lmtd_nominal() const;
    double secondary_dt_nominal() const { return secondary_supply_nom - secondary_return_nom; }
};

struct ProducerSpec {
    double supply_temperature = 80.0; // degC
    double max_capacity = 0.0;        // W
    double efficiency = 1.0;
    double capex_per_kw = 0.0;  // EUR/kW
    double capex_fixed = 0.0;   // EUR
    double fixed_opex = 0.0;    // EUR/yr
    double heat_price = 0.0;    // EUR/kWh
    double pump_efficiency = 0.81;
    double reference_return_temperature = 20.0; // degC, defines the design flow
    bool waste_heat = false;

    void validate() const;
    /// Upper bound on the volumetric flow [m^3/s].
    double max_flow(const FluidProps &fluid) const;
};

/// UA sized so that the nominal temperatures transfer the peak demand.
double compute_hx_ua(const ConsumerSpec &spec);
/// Nominal primary flow over sqrt(nominal valve pressure drop).
double compute_valve_constant(const ConsumerSpec &spec, double nominal_dp, const FluidProps &fluid);
/// Nominal primary flow [m^3/s].
double nominal_primary_flow(const ConsumerSpec &spec, const FluidProps &fluid);

class NetworkGraph {
public:
    const std::vector<Node> &nodes() const { return nodes_; }
    const std::vector<Edge> &edges() const { return edges_; }
    const Node &node(std::size_t i) const { return nodes_[i]; }
    const Edge &edge(std::size_t e) const { return edges_[e]; }

    std::size_t n_nodes() const { return nodes_.size(); }
    std::size_t n_edges() const { return edges_.size(); }
    std::size_t n_pipes() const { return pipes_.size(); }
    std::size_t n_consumers() const { return consumers_.size(); }
    std::size_t n_producers() const { return producers_.size(); }

    /// Edge index of the k-th pipe / consumer / producer.
    const std::vector<std::size_t> &pipe_edges() const { return pipes_; }
    const std::vector<std::size_t> &consumer_edges() const { return consumers_; }
    const std::vector<std::size_t> &producer_edges() const { return producers_; }
    /// Position of an edge within its kind (pipe, consumer or producer index).
    std::size_t entity_index(std::size_t e) const { return entity_index_[e]; }

    const std::vector<std::size_t> &in_edges(std::size_t n) const { return in_[n]; }
    const std::vector<std::size_t> &out_edges(std::size_t n) const { return out_[n]; }

    std::size_t reference_node() const { return reference_; }
    /// One pressure reference per weakly connected component (the configured
    /// reference for its own component, the first producer return elsewhere).
    const std::vector<std::size_t> &reference_nodes() const { return references_; }
    std::size_t component(std::size_t n) const { return component_[n]; }
    std::size_t n_components() const { return references_.size(); }

    const ConsumerSpec &consumer(std::size_t k) const { return consumer_specs_[k]; }
    const ProducerSpec &producer(std::size_t k) const { return producer_specs_[k]; }
    const FluidProps &fluid() const { return fluid_; }
    const PipeCatalog &catalog() const { return catalog_; }

    std::optional<std::size_t> find_node(const std::string &id) const;
    std::optional<std::size_t> find_edge(const std::string &id) const;

    friend NetworkGraph build_graph(std::vector<Node> nodes, const std::vector<EdgeRecord> &edges,
                                    const std::string &reference_node,
                                    const std::unordered_map<std::string, ConsumerSpec> &consumers,
                                    const std::unordered_map<std::string, ProducerSpec> &producers,
                                    const FluidProps &fluid, const PipeCatalog &catalog, bool require_connected);

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::size_t> pipes_, consumers_, producers_;
    std::vector<std::size_t> entity_index_;
    std::vector<std::vector<std::size_t>> in_, out_;
    std::vector<ConsumerSpec> consumer_specs_;
    std::vector<ProducerSpec> producer_specs_;
    std::size_t reference_ = 0;
    std::vector<std::size_t> references_;
    std::vector<std::size_t> component_;
    std::unordered_map<std::string, std::size_t> node_lookup_, edge_lookup_;
    FluidProps fluid_;
    PipeCatalog catalog_;
};

/// Validates the records and builds the incidence structure.
/// Throws InputError on dangling references, bad lengths, a missing or
/// non-producer reference node, mis-oriented producer/consumer edges and
/// consumers without a path to a producer.
NetworkGraph build_network(std::vector<Node> nodes, const std::vector<EdgeRecord> &edges,
                           const std::string &reference_node,
                           const std::unordered_map<std::string, ConsumerSpec> &consumers,
                           const std::unordered_map<std::string, ProducerSpec> &producers,
                           const FluidProps &fluid = {}, const PipeCatalog &catalog = {});

/// Copy of the graph without the masked-out pipes (and consumers, if a
/// consumer mask is given) and any nodes left isolated.
NetworkGraph remove_pipes(const NetworkGraph &graph, const std::vector<bool> &keep_pipe,
                          const std::vector<bool> &keep_consumer = {});

enum class VariableKind { diameter, capacity, valve, flow };

struct DesignKey {
    VariableKind kind = VariableKind::diameter;
    std::size_t entity = 0;
    std::size_t period = 0; // ignored for diameter and capacity

    bool operator==(const DesignKey &) const = default;
};

/// Flat layout [d | phi | (alpha_0, gamma_0) | (alpha_1, gamma_1) | ...].
class DesignLayout {
public:
    DesignLayout() = default;
    DesignLayout(std::size_t n_pipe, std::size_t n_producer, std::size_t n_consumer, std::size_t n_period);

    std::size_t size() const { return size_; }
    std::size_t n_pipes() const { return n_pipe_; }
    std::size_t n_producers() const { return n_pr_; }
    std::size_t n_consumers() const { return n_con_; }
    std::size_t n_periods() const { return n_period_; }

    std::size_t diameter(std::size_t pipe) const { return pipe; }
    std::size_t capacity(std::size_t producer) const { return n_pipe_ + producer; }
    std::size_t valve(std::size_t period, std::size_t consumer) const
    {
        return n_pipe_ + n_pr_ + period * (n_con_ + n_pr_) + consumer;
    }
    std::size_t flow(std::size_t period, std::size_t producer) const
    {
        return n_pipe_ + n_pr_ + period * (n_con_ + n_pr_) + n_con_ + producer;
    }
    /// First index of the per-period block of `period`.
    std::size_t period_offset(std::size_t period) const { return n_pipe_ + n_pr_ + period * (n_con_ + n_pr_); }
    std::size_t period_block_size() const { return n_con_ + n_pr_; }

    std::size_t index(const DesignKey &key) const;
    DesignKey key(std::size_t index) const;

    bool operator==(const DesignLayout &) const = default;

private:
    std::size_t n_pipe_ = 0, n_pr_ = 0, n_con_ = 0, n_period_ = 0, size_ = 0;
};

DesignLayout design_index_map(const NetworkGraph &graph, std::size_t n_period);

/// Design vector with typed accessors over the flat values.
struct DesignVector {
    DesignLayout layout;
    Eigen::VectorXd values;

    DesignVector() = default;
    explicit DesignVector(DesignLayout l) : layout(l), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.size()))) {}

    double &d(std::size_t pipe) { return values[idx(layout.diameter(pipe))]; }
    double d(std::size_t pipe) const { return values[idx(layout.diameter(pipe))]; }
    double &phi(std::size_t producer) { return values[idx(layout.capacity(producer))]; }
    double phi(std::size_t producer) const { return values[idx(layout.capacity(producer))]; }
    double &alpha(std::size_t period, std::size_t consumer) { return values[idx(layout.valve(period, consumer))]; }
    double alpha(std::size_t period, std::size_t consumer) const { return values[idx(layout.valve(period, consumer))]; }
    double &gamma(std::size_t period, std::size_t producer) { return values[idx(layout.flow(period, producer))]; }
    double gamma(std::size_t period, std::size_t producer) const { return values[idx(layout.flow(period, producer))]; }

private:
    static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }
};

} // namespace dhn
