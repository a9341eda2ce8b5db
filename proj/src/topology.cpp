#include "tddsync/topology.hpp"

#include <algorithm>
#include <json.hpp>
#include <numeric>
#include <queue>
#include <set>

#include "tddsync/error.hpp"

namespace tddsync {

namespace {

struct DisjointSets {
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
  std::vector<int> parent;
};

std::vector<std::set<int>> square_neighborhoods(const ApGraph& g) {
  std::vector<std::set<int>> out(static_cast<std::size_t>(g.nodes));
  for (int v = 0; v < g.nodes; ++v) {
    for (int u : g.neighbors[v]) {
      out[v].insert(u);
      for (int w : g.neighbors[u])
        if (w != v) out[v].insert(w);
    }
  }
  return out;
}

}  // namespace

bool ApGraph::adjacent(int a, int b) const { return edge_index(a, b) >= 0; }

int ApGraph::edge_index(int a, int b) const {
  const Edge key{std::min(a, b), std::max(a, b)};
  for (std::size_t m = 0; m < edges.size(); ++m)
    if (edges[m] == key) return static_cast<int>(m);
  return -1;
}

Eigen::MatrixXd incidence_matrix(int nodes, const std::vector<Edge>& edges) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(edges.size()), nodes);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    b(static_cast<Eigen::Index>(m), edges[m].first) = -1.0;
    b(static_cast<Eigen::Index>(m), edges[m].second) = 1.0;
  }
  return b;
}

bool is_connected(int nodes, const std::vector<std::vector<int>>& neighbors) {
  if (nodes <= 1) return true;
  std::vector<bool> seen(static_cast<std::size_t>(nodes), false);
  std::queue<int> todo;
  todo.push(0);
  seen[0] = true;
  int count = 1;
  while (!todo.empty()) {
    const int v = todo.front();
    todo.pop();
    for (int u : neighbors[v]) {
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        todo.push(u);
      }
    }
  }
  return count == nodes;
}

ApGraph make_graph(int nodes, std::vector<Edge> edges, double threshold) {
  ApGraph g;
  g.nodes = nodes;
  for (Edge& e : edges) {
    if (e.first == e.second || e.first < 0 || e.second < 0 || e.first >= nodes ||
        e.second >= nodes)
      throw Error(ErrorKind::invalid_config, "edge endpoints out of range");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.incidence = incidence_matrix(nodes, g.edges);
  g.threshold = threshold;
  g.neighbors.assign(static_cast<std::size_t>(nodes), {});
  for (const Edge& e : g.edges) {
    g.neighbors[e.first].push_back(e.second);
    g.neighbors[e.second].push_back(e.first);
  }
  for (auto& n : g.neighbors) std::sort(n.begin(), n.end());
  return g;
}

ApGraph build_graph(const Eigen::MatrixXd& strengths, int m_min) {
  const int L = static_cast<int>(strengths.rows());
  if (L < 2) throw Error(ErrorKind::invalid_config, "a measurement graph needs L >= 2");
  if (m_min > L * (L - 1) / 2)
    throw Error(ErrorKind::invalid_config, "m_min exceeds L(L-1)/2");

  struct Candidate {
    double strength;
    Edge edge;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) candidates.push_back({strengths(i, j), {i, j}});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.strength > b.strength; });

  DisjointSets sets(L);
  int components = L;
  std::vector<Edge> chosen;
  double threshold = 0.0;
  for (const Candidate& c : candidates) {
    if (components == 1 && static_cast<int>(chosen.size()) >= m_min) break;
    if (sets.unite(c.edge.first, c.edge.second)) --components;
    chosen.push_back(c.edge);
    threshold = c.strength;
  }
  return make_graph(L, std::move(chosen), threshold);
}

Coloring distance2_coloring(const ApGraph& graph) {
  const auto square = square_neighborhoods(graph);
  std::vector<int> order(static_cast<std::size_t>(graph.nodes));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return square[a].size() > square[b].size();
  });

  Coloring c;
  c.color.assign(static_cast<std::size_t>(graph.nodes), -1);
  for (int v : order) {
    std::set<int> taken;
    for (int u : square[v])
      if (c.color[u] >= 0) taken.insert(c.color[u]);
    int pick = 0;
    while (taken.count(pick)) ++pick;
    c.color[v] = pick;
    c.num_colors = std::max(c.num_colors, pick + 1);
  }
  return c;
}

bool is_valid_distance2_coloring(const ApGraph& graph, const Coloring& coloring) {
  const auto square = square_neighborhoods(graph);
  for (int v = 0; v < graph.nodes; ++v)
    for (int u : square[v])
      if (coloring.color[u] == coloring.color[v]) return false;
  return true;
}

int Schedule::measurement_slot_at(int slot_in_frame) const {
  for (std::size_t j = 0; j < slots.size(); ++j)
    if (slots[j].slot_in_frame == slot_in_frame) return static_cast<int>(j) + 1;
  return 0;
}

Schedule build_schedule(const ApGraph& graph, const Coloring& coloring, const SystemConfig& config) {
  Schedule s;
  s.coloring = coloring;
  s.timing = SlotTiming::from_config(config);
  const int n_m = coloring.num_colors - 1;
  if (n_m < 1) throw Error(ErrorKind::invalid_config, "coloring needs at least two colors");
  s.frame_slots = config.F > 0 ? config.F : n_m + config.unbroken_slots;
  if (s.frame_slots < n_m)
    throw Error(ErrorKind::invalid_config, "frame length F is shorter than n_m = n_c - 1");

  // Master groups: every color but the responder color 0, largest group
  // first, ties by smallest member.
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(coloring.num_colors));
  for (int v = 0; v < graph.nodes; ++v) groups[coloring.color[v]].push_back(v);
  for (int c = 1; c < coloring.num_colors; ++c) s.master_colors.push_back(c);
  std::stable_sort(s.master_colors.begin(), s.master_colors.end(), [&](int a, int b) {
    if (groups[a].size() != groups[b].size()) return groups[a].size() > groups[b].size();
    return groups[a].front() < groups[b].front();
  });

  const int F = s.frame_slots;
  std::vector<int> positions;
  for (int j = 0; j < n_m; ++j) {
    positions.push_back(config.slot_placement == SlotPlacement::leading
                            ? j + 1
                            : static_cast<int>((static_cast<std::int64_t>(j) * F) / n_m) + 1);
  }

  const std::int64_t tau_c = config.tau_c;
  struct Event {
    int tx, rx;
    std::int64_t t;
  };
  std::vector<Event> events;
  for (int j = 0; j < n_m; ++j) {
    MeasurementSlot slot;
    slot.slot_in_frame = positions[j];
    slot.d = j == 0 ? positions[0] + F - positions[n_m - 1] : positions[j] - positions[j - 1];
    const std::int64_t base = (positions[j] - 1) * tau_c;
    slot.i_update = base + s.timing.i2;
    slot.masters = groups[s.master_colors[j]];
    for (int m : slot.masters) {
      for (int o : graph.neighbors[m]) {
        slot.transmissions.push_back({m, o, true});
        events.push_back({m, o, base + s.timing.i1});
      }
    }
    for (int r : groups[0]) {
      for (int m : slot.masters) {
        if (graph.adjacent(r, m)) {
          slot.transmissions.push_back({r, m, false});
          events.push_back({r, m, base + s.timing.i2});
        }
      }
    }
    for (int m = 0; m < graph.num_edges(); ++m) {
      const Edge& e = graph.edges[m];
      const bool hit = std::find(slot.masters.begin(), slot.masters.end(), e.first) !=
                           slot.masters.end() ||
                       std::find(slot.masters.begin(), slot.masters.end(), e.second) !=
                           slot.masters.end();
      if (hit) slot.measured_edges.push_back(m);
    }
    s.slots.push_back(std::move(slot));
  }

  const std::int64_t frame_len = F * tau_c;
  auto latest = [&](int tx, int rx, std::int64_t now) -> std::int64_t {
    std::int64_t best = INT64_MIN;
    for (const Event& ev : events) {
      if (ev.tx != tx || ev.rx != rx) continue;
      for (std::int64_t t : {ev.t, ev.t - frame_len})
        if (t <= now) best = std::max(best, t);
    }
    return best;
  };
  for (MeasurementSlot& slot : s.slots) {
    for (const Edge& e : graph.edges) {
      EdgeTimestamps ts;
      ts.at_first = latest(e.second, e.first, slot.i_update);
      ts.at_second = latest(e.first, e.second, slot.i_update);
      if (ts.at_first == INT64_MIN || ts.at_second == INT64_MIN)
        throw Error(ErrorKind::schedule_incomplete,
                    "edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                        ") is not measured in both directions within a frame");
      slot.timestamps.push_back(ts);
    }
  }
  return s;
}

Eigen::MatrixXd measurement_matrix(const Schedule& schedule, const ApGraph& graph, int n) {
  const MeasurementSlot& slot = schedule.slots.at(static_cast<std::size_t>(n - 1));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(slot.measured_edges.size()),
                                            graph.num_edges());
  for (std::size_t r = 0; r < slot.measured_edges.size(); ++r)
    a(static_cast<Eigen::Index>(r), slot.measured_edges[r]) = 1.0;
  return a;
}

std::string dump_schedule(const Schedule& schedule, const ApGraph& graph) {
  using nlohmann::ordered_json;
  ordered_json root;
  root["frame_slots"] = schedule.frame_slots;
  root["num_colors"] = schedule.coloring.num_colors;
  root["num_measurement_slots"] = schedule.num_measurement_slots();
  root["coloring"] = schedule.coloring.color;
  ordered_json edges = ordered_json::array();
  for (const Edge& e : graph.edges) edges.push_back({e.first, e.second});
  root["edges"] = edges;
  ordered_json slots = ordered_json::array();
  for (const MeasurementSlot& s : schedule.slots) {
    ordered_json js;
    js["slot_in_frame"] = s.slot_in_frame;
    js["d"] = s.d;
    js["i_update"] = s.i_update;
    js["masters"] = s.masters;
    ordered_json tx = ordered_json::array();
    for (const Transmission& t : s.transmissions)
      tx.push_back({{"tx", t.tx}, {"rx", t.rx}, {"instant", t.at_i1 ? "i1" : "i2"}});
    js["transmissions"] = tx;
    js["measured_edges"] = s.measured_edges;
    ordered_json ts = ordered_json::array();
    for (const EdgeTimestamps& t : s.timestamps)
      ts.push_back({{"i_first", t.at_first}, {"i_second", t.at_second}});
    js["timestamps"] = ts;
    slots.push_back(js);
  }
  root["slots"] = slots;
  return root.dump(2);
}

}  // namespace tddsync
