#pragma once

// Measurement graph and the broken-TDD schedule derived from its distance-2
// coloring.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tddsync/core_model.hpp"

namespace tddsync {

struct Edge {
  int first = 0;   // l1, the smaller AP index
  int second = 0;  // l2
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct ApGraph {
  int nodes = 0;
  std::vector<Edge> edges;
  Eigen::MatrixXd incidence;  // M x L: -1 at first, +1 at second
  double threshold = 0.0;
  std::vector<std::vector<int>> neighbors;

  int num_edges() const { return static_cast<int>(edges.size()); }
  bool adjacent(int a, int b) const;
  /// Index of edge {a, b} or -1.
  int edge_index(int a, int b) const;
};

/// Graph from an explicit edge list (used for fixed topologies and tests).
ApGraph make_graph(int nodes, std::vector<Edge> edges, double threshold = 0.0);

/// Adds candidate edges in descending strength until the graph is connected
/// and holds at least m_min edges. strengths is symmetric L x L.
ApGraph build_graph(const Eigen::MatrixXd& strengths, int m_min);

Eigen::MatrixXd incidence_matrix(int nodes, const std::vector<Edge>& edges);

bool is_connected(int nodes, const std::vector<std::vector<int>>& neighbors);

struct Coloring {
  std::vector<int> color;  // per node, 0-based; color 0 is the responder group
  int num_colors = 0;
};

/// Greedy Welsh-Powell on the square graph: nodes by descending square-graph
/// degree, ties by ascending index, each takes the smallest free color.
Coloring distance2_coloring(const ApGraph& graph);

bool is_valid_distance2_coloring(const ApGraph& graph, const Coloring& coloring);

/// Latest global sample (relative to the frame start) at which each direction
/// of an edge was measured, as seen from one measurement slot.
struct EdgeTimestamps {
  std::int64_t at_first = 0;   // i_{l1}: signal sent from second to first
  std::int64_t at_second = 0;  // i_{l2}: signal sent from first to second
  std::int64_t minus() const { return std::min(at_first, at_second); }
  std::int64_t plus() const { return std::max(at_first, at_second); }
};

struct Transmission {
  int tx = 0;
  int rx = 0;
  bool at_i1 = true;  // false: at i2
};

struct MeasurementSlot {
  int slot_in_frame = 1;  // 1-based position within the frame
  std::vector<int> masters;
  std::vector<Transmission> transmissions;
  std::vector<int> measured_edges;  // ascending edge indices
  int d = 1;                        // slots since the previous measurement slot
  std::int64_t i_update = 0;        // i2 of this slot, relative to the frame start
  std::vector<EdgeTimestamps> timestamps;  // per edge, relative to the frame start
};

struct Schedule {
  Coloring coloring;
  std::vector<int> master_colors;  // color of the masters in each measurement slot
  int frame_slots = 0;             // F
  std::vector<MeasurementSlot> slots;
  SlotTiming timing;

  int num_measurement_slots() const { return static_cast<int>(slots.size()); }
  /// 1-based measurement slot index for a 1-based slot position, or 0.
  int measurement_slot_at(int slot_in_frame) const;
};

/// F comes from config.F when set, otherwise n_m + config.unbroken_slots.
Schedule build_schedule(const ApGraph& graph, const Coloring& coloring, const SystemConfig& config);

/// Rows of the M x M identity for the edges measured in slot n (1-based).
Eigen::MatrixXd measurement_matrix(const Schedule& schedule, const ApGraph& graph, int n);

/// Stable JSON dump of a schedule.
std::string dump_schedule(const Schedule& schedule, const ApGraph& graph);

}  // namespace tddsync
