#include "rgm/benchlib.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "rgm/threads.hpp"

namespace rgm {

const char* planner_kind_name(PlannerKind k) {
  return k == PlannerKind::RRTStar ? "rrtstar" : "hrrtstar";
}

namespace {

BenchRecord make_record(const std::string& map_id, int trial, PlannerKind kind,
                        double p_h, std::uint64_t seed, const PlanResult& res,
                        double c_ref, double c_th, int max_iters) {
  BenchRecord r;
  r.map_id = map_id;
  r.trial = trial;
  r.planner = kind;
  r.p_h = p_h;
  r.seed = seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (!res.cost_trace.empty()) {
    r.initial_iters = res.cost_trace.front().first;
    r.initial_cost = res.cost_trace.front().second;
  } else {
    r.initial_iters = max_iters;
    r.initial_cost = nan;
  }
  r.optimal_cost = res.path ? res.path_cost : nan;
  r.optimal_iters = max_iters;
  for (const auto& [it, c] : res.cost_trace) {
    double d = c - c_ref;
    if (d * d < c_th) {
      r.optimal_iters = it;
      break;
    }
  }
  return r;
}

}  // namespace

BenchOutput bench_compare(const std::vector<BenchMapCase>& cases,
                          const BenchConfig& cfg) {
  if (cfg.trials < 2) throw std::invalid_argument("bench_compare: trials >= 2");
  if (cases.empty()) throw std::invalid_argument("bench_compare: no cases");

  const int T = cfg.trials;
  const std::size_t total = cases.size() * static_cast<std::size_t>(T) * 2;
  std::vector<BenchRecord> records(total);

  // job index -> (case, planner, trial); output slot matches that order
  parallel_for(total, [&](std::size_t job) {
    std::size_t per_case = static_cast<std::size_t>(T) * 2;
    std::size_t ci = job / per_case;
    std::size_t rem = job % per_case;
    PlannerKind kind = rem < static_cast<std::size_t>(T) ? PlannerKind::RRTStar
                                                         : PlannerKind::HRRTStar;
    int trial = static_cast<int>(rem % static_cast<std::size_t>(T));
    const BenchMapCase& bc = cases[ci];

    PlannerConfig pc = cfg.planner;
    pc.p_h = cfg.p_h;
    pc.seed = derive_seed(cfg.planner.seed, ci * 1000003ULL +
                                                static_cast<std::uint64_t>(trial));
    const HeuristicMask* mask =
        (kind == PlannerKind::HRRTStar && bc.mask.pixel_count > 0) ? &bc.mask
                                                                   : nullptr;
    PlanResult res = plan_rrt_star(bc.map, bc.problem, pc, mask);
    double c_th = default_c_th(bc.c_ref);
    records[job] = make_record(bc.map_id, trial, kind,
                               kind == PlannerKind::HRRTStar ? cfg.p_h : 0.0,
                               pc.seed, res, bc.c_ref, c_th, pc.max_iters);
  });

  BenchOutput out;
  out.records = std::move(records);
  out.summary = summarize(out.records);
  return out;
}

namespace {

GroupStats stats_for(const std::vector<const BenchRecord*>& group) {
  GroupStats s;
  s.n = static_cast<int>(group.size());
  std::vector<double> ic, ii, oc, oi;
  for (const auto* r : group) {
    if (!std::isnan(r->initial_cost)) ic.push_back(r->initial_cost);
    if (!std::isnan(r->optimal_cost)) oc.push_back(r->optimal_cost);
    ii.push_back(r->initial_iters);
    oi.push_back(r->optimal_iters);
  }
  if (!ic.empty()) s.initial_cost = quartiles(std::move(ic));
  if (!oc.empty()) s.optimal_cost = quartiles(std::move(oc));
  s.initial_iters = quartiles(std::move(ii));
  s.optimal_iters = quartiles(std::move(oi));
  return s;
}

}  // namespace

ComparisonSummary summarize(const std::vector<BenchRecord>& records) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  std::map<std::string, std::pair<std::vector<const BenchRecord*>,
                                  std::vector<const BenchRecord*>>>
      by_map;
  for (const auto& r : records) {
    auto& slot = by_map[r.map_id];
    (r.planner == PlannerKind::RRTStar ? slot.first : slot.second).push_back(&r);
  }
  ComparisonSummary summary;
  for (auto& [map_id, groups] : by_map) {
    if (groups.first.size() < 2 || groups.second.size() < 2)
      throw std::invalid_argument("summarize: need >= 2 records per group");
    MapComparison mc;
    mc.map_id = map_id;
    mc.rrtstar = stats_for(groups.first);
    mc.hrrtstar = stats_for(groups.second);
    std::vector<double> h_ii, r_ii, h_oi, r_oi;
    for (const auto* r : groups.first) {
      r_ii.push_back(r->initial_iters);
      r_oi.push_back(r->optimal_iters);
    }
    for (const auto* r : groups.second) {
      h_ii.push_back(r->initial_iters);
      h_oi.push_back(r->optimal_iters);
    }
    mc.p_initial_iters = mann_whitney_p_less(h_ii, r_ii);
    mc.p_optimal_iters = mann_whitney_p_less(h_oi, r_oi);
    summary.maps.push_back(std::move(mc));
  }
  return summary;
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_records_csv(const std::string& path,
                       const std::vector<BenchRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "map_id,trial,planner,p_h,initial_cost,initial_iters,optimal_cost,"
         "optimal_iters,seed\n";
  for (const auto& r : records) {
    out << r.map_id << ',' << r.trial << ',' << planner_kind_name(r.planner)
        << ',' << fmt_double(r.p_h) << ',' << fmt_double(r.initial_cost) << ','
        << r.initial_iters << ',' << fmt_double(r.optimal_cost) << ','
        << r.optimal_iters << ',' << r.seed << '\n';
  }
}

void write_summary_csv(const std::string& path, const ComparisonSummary& summary) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "map_id,planner,n,initial_cost_med,initial_cost_q1,initial_cost_q3,"
         "initial_iters_med,initial_iters_q1,initial_iters_q3,"
         "optimal_cost_med,optimal_cost_q1,optimal_cost_q3,"
         "optimal_iters_med,optimal_iters_q1,optimal_iters_q3,"
         "p_initial_iters,p_optimal_iters\n";
  auto row = [&](const std::string& map_id, const char* planner,
                 const GroupStats& s, bool with_p, const MapComparison& mc) {
    out << map_id << ',' << planner << ',' << s.n << ','
        << fmt_double(s.initial_cost.med) << ',' << fmt_double(s.initial_cost.q1)
        << ',' << fmt_double(s.initial_cost.q3) << ','
        << fmt_double(s.initial_iters.med) << ',' << fmt_double(s.initial_iters.q1)
        << ',' << fmt_double(s.initial_iters.q3) << ','
        << fmt_double(s.optimal_cost.med) << ',' << fmt_double(s.optimal_cost.q1)
        << ',' << fmt_double(s.optimal_cost.q3) << ','
        << fmt_double(s.optimal_iters.med) << ',' << fmt_double(s.optimal_iters.q1)
        << ',' << fmt_double(s.optimal_iters.q3) << ',';
    if (with_p)
      out << fmt_double(mc.p_initial_iters) << ',' << fmt_double(mc.p_optimal_iters);
    else
      out << ',';
    out << '\n';
  };
  for (const auto& mc : summary.maps) {
    row(mc.map_id, "rrtstar", mc.rrtstar, false, mc);
    row(mc.map_id, "hrrtstar", mc.hrrtstar, true, mc);
  }
}

namespace {

void svg_coord(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  out += buf;
}

}  // namespace

std::string render_svg(const GridMap& map, const HeuristicMask* mask,
                       const Tree* tree, const std::vector<WorldPoint>* path,
                       const PlanProblem* problem) {
  if (mask != nullptr && (mask->width != map.width || mask->height != map.height))
    throw std::invalid_argument("render_svg: mask/map size mismatch");
  std::string s;
  char head[160];
  std::snprintf(head, sizeof head,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                map.width * 4, map.height * 4, map.width, map.height);
  s += head;
  char bg[96];
  std::snprintf(bg, sizeof bg,
                "<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", map.width,
                map.height);
  s += bg;

  // obstacle cells merged into row runs
  for (int y = 0; y < map.height; ++y) {
    int x = 0;
    while (x < map.width) {
      if (!map.occupied(x, y)) {
        ++x;
        continue;
      }
      int run = x;
      while (run < map.width && map.occupied(run, y)) ++run;
      char rect[112];
      std::snprintf(rect, sizeof rect,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"1\" "
                    "fill=\"black\"/>\n",
                    x, y, run - x);
      s += rect;
      x = run;
    }
  }

  if (mask != nullptr) {
    for (int cell : mask->member_cells) {
      int cy = cell / mask->width, cx = cell % mask->width;
      char rect[128];
      std::snprintf(rect, sizeof rect,
                    "<rect x=\"%d\" y=\"%d\" width=\"1\" height=\"1\" "
                    "fill=\"#ffd700\" fill-opacity=\"0.75\"/>\n",
                    cx, cy);
      s += rect;
    }
  }

  if (tree != nullptr && tree->nodes.size() > 1) {
    s += "<path fill=\"none\" stroke=\"#9999aa\" stroke-width=\"0.12\" d=\"";
    for (std::size_t i = 0; i < tree->nodes.size(); ++i) {
      int p = tree->nodes[i].parent;
      if (p < 0) continue;
      s += "M";
      svg_coord(s, tree->nodes[static_cast<std::size_t>(p)].pos.x);
      s += " ";
      svg_coord(s, tree->nodes[static_cast<std::size_t>(p)].pos.y);
      s += "L";
      svg_coord(s, tree->nodes[i].pos.x);
      s += " ";
      svg_coord(s, tree->nodes[i].pos.y);
    }
    s += "\"/>\n";
  }

  if (path != nullptr && path->size() >= 2) {
    s += "<polyline fill=\"none\" stroke=\"green\" stroke-width=\"0.5\" points=\"";
    for (std::size_t i = 0; i < path->size(); ++i) {
      if (i) s += " ";
      svg_coord(s, (*path)[i].x);
      s += ",";
      svg_coord(s, (*path)[i].y);
    }
    s += "\"/>\n";
  }

  if (problem != nullptr) {
    char c1[128], c2[128];
    std::snprintf(c1, sizeof c1,
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"1.4\" fill=\"red\"/>\n",
                  problem->start.x, problem->start.y);
    std::snprintf(c2, sizeof c2,
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"1.4\" fill=\"green\"/>\n",
                  problem->goal.x, problem->goal.y);
    s += c1;
    s += c2;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace rgm
