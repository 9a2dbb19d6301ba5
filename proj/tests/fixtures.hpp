#pragma once

// Small hand-built networks shared by the unit tests.

#include "dhn/hydronics.hpp"

#include <string>
#include <vector>

namespace fixtures {

/// One boiler feeding two consumers through a feed tree and a mirrored return
/// tree. With `loop` an extra feed pipe closes a ring between the consumers.
inline dhn::NetworkGraph tiny_network(bool loop = false, bool second_producer = false)
{
    using dhn::NodeKind;
    using dhn::EdgeKind;
    std::vector<dhn::Node> nodes{
        {"PR", NodeKind::producer_return, 0, 0}, {"PF", NodeKind::producer_feed, 0, 1},
        {"J1f", NodeKind::junction, 200, 1},     {"J1r", NodeKind::junction, 200, 0},
        {"C1f", NodeKind::consumer_feed, 300, 1}, {"C1r", NodeKind::consumer_return, 300, 0},
        {"C2f", NodeKind::consumer_feed, 200, 151}, {"C2r", NodeKind::consumer_return, 200, 150},
    };
    std::vector<dhn::EdgeRecord> edges{
        {"P", EdgeKind::producer, "PR", "PF", 0},
        {"f1", EdgeKind::pipe, "PF", "J1f", 200},
        {"f2", EdgeKind::pipe, "J1f", "C1f", 100},
        {"f3", EdgeKind::pipe, "J1f", "C2f", 150},
        {"r2", EdgeKind::pipe, "C1r", "J1r", 100},
        {"r3", EdgeKind::pipe, "C2r", "J1r", 150},
        {"r1", EdgeKind::pipe, "J1r", "PR", 200},
        {"C1", EdgeKind::consumer, "C1f", "C1r", 0},
        {"C2", EdgeKind::consumer, "C2f", "C2r", 0},
    };
    if (loop)
        edges.push_back({"f4", EdgeKind::pipe, "C1f", "C2f", 180});
    std::unordered_map<std::string, dhn::ConsumerSpec> consumers;
    dhn::ConsumerSpec c1;
    c1.peak_demand = 200e3;
    dhn::ConsumerSpec c2;
    c2.peak_demand = 150e3;
    consumers["C1"] = c1;
    consumers["C2"] = c2;
    std::unordered_map<std::string, dhn::ProducerSpec> producers;
    dhn::ProducerSpec boiler;
    boiler.supply_temperature = 80.0;
    boiler.max_capacity = 1e6;
    boiler.capex_per_kw = 225;
    boiler.capex_fixed = 2200;
    boiler.fixed_opex = 235;
    boiler.heat_price = 0.0319;
    producers["P"] = boiler;
    if (second_producer) {
        nodes.push_back({"QR", NodeKind::producer_return, 400, 0});
        nodes.push_back({"QF", NodeKind::producer_feed, 400, 1});
        edges.push_back({"Q", EdgeKind::producer, "QR", "QF", 0});
        edges.push_back({"f5", EdgeKind::pipe, "QF", "C1f", 120});
        edges.push_back({"r5", EdgeKind::pipe, "C1r", "QR", 120});
        dhn::ProducerSpec waste;
        waste.supply_temperature = 65.0;
        waste.max_capacity = 300e3;
        waste.heat_price = 0.005;
        waste.waste_heat = true;
        producers["Q"] = waste;
    }
    return dhn::build_network(nodes, edges, "PR", consumers, producers);
}

/// Reasonable operating point: all valves open, producers covering the demand.
inline dhn::DesignVector tiny_design(const dhn::NetworkGraph &g, const std::vector<dhn::PeriodData> &periods,
                                     double d = 0.08)
{
    dhn::DesignVector x(dhn::design_index_map(g, periods.size()));
    for (std::size_t k = 0; k < g.n_pipes(); ++k)
        x.d(k) = d;
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        x.phi(k) = 1.0;
    for (std::size_t t = 0; t < periods.size(); ++t) {
        double need = 0.0;
        for (std::size_t k = 0; k < g.n_consumers(); ++k) {
            x.alpha(t, k) = 1.0;
            need += periods[t].demand[k];
        }
        const double rho_cp = g.fluid().rho_cp();
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            x.gamma(t, k) = 1.1 * need / (rho_cp * 38.0) / static_cast<double>(g.n_producers());
    }
    return x;
}

inline dhn::PeriodData period(const std::string &name, double t_amb, std::vector<double> demand, double weight = 1.0)
{
    dhn::PeriodData p;
    p.name = name;
    p.ambient_temperature = t_amb;
    p.demand = std::move(demand);
    p.weight = weight;
    return p;
}

} // namespace fixtures
