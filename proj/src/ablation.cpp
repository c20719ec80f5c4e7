#include "photocon/ablation.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "photocon/error.hpp"

namespace photocon {

std::vector<AblationCell> parse_ablation_grid(std::string_view text, const std::string& origin) {
  std::vector<AblationCell> cells;
  std::set<std::string> names;
  std::istringstream is{std::string(text)};
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    AblationCell cell;
    if (!(ls >> cell.name)) continue;
    const std::string where = origin + ":" + std::to_string(n);
    if (cell.name.find('=') != std::string::npos) throw UsageError(where + ": line must start with a cell name");
    if (cell.name.find('/') != std::string::npos || cell.name == "." || cell.name == "..")
      throw UsageError(where + ": cell name '" + cell.name + "' is not a plain directory name");
    if (!names.insert(cell.name).second) throw UsageError(where + ": duplicate cell '" + cell.name + "'");
    for (std::string kv; ls >> kv;) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size())
        throw UsageError(where + ": expected key=value, got '" + kv + "'");
      cell.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    cells.push_back(std::move(cell));
  }
  if (cells.empty()) throw UsageError(origin + ": grid has no cells");
  return cells;
}

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> g;
  for (int k = 1; k <= 5; ++k) g.push_back({"K" + std::to_string(k), {{"out_channels", std::to_string(k)}}});
  for (const char* w : {"w_triplet", "w_intra", "w_scale", "w_mc"})
    g.push_back({std::string("no_") + (w + 2), {{w, "0"}}});
  g.push_back({"rot", {{"w_rot", "1"}}});
  return g;
}

AblationReport run_ablation(const TripletArchive& archive, const ConfigMap& base, const std::vector<AblationCell>& grid,
                            const std::vector<SceneSet>& scenes, const MatchBenchConfig& match,
                            const std::filesystem::path& out_dir, int threads) {
  AblationReport rep;
  // Validate every cell before spending any training time.
  for (const auto& cell : grid) {
    ConfigMap cfg = base;
    for (const auto& [k, v] : cell.overrides) cfg[k] = v;
    AblationRow row{cell, {}, {}, {}};
    EccConfig ecc;
    apply_config(cfg, row.train, ecc);
    row.train.validate();
    rep.rows.push_back(std::move(row));
  }
  for (auto& row : rep.rows) {
    std::printf("ablate: cell %s\n", row.cell.name.c_str());
    std::fflush(stdout);
    TrainOptions opt;
    opt.threads = threads;
    const auto res = train(archive, row.train, out_dir / row.cell.name, opt);
    if (!res.log.empty()) row.final_loss = res.log.back().loss;
    MatchBenchConfig mc = match;
    mc.threads = threads;
    row.match = run_match_benchmark(scenes, &res.weights, mc);
  }
  return rep;
}

std::string ablation_csv(const AblationReport& r) {
  std::ostringstream os;
  os << "cell";
  if (!r.rows.empty())
    for (const auto& s : r.rows.front().match.sizes) os << ",auc_" << s.patch_size;
  os << ",auc_all\n";
  char buf[32];
  for (const auto& row : r.rows) {
    os << row.cell.name;
    for (const auto& s : row.match.sizes) {
      std::snprintf(buf, sizeof buf, ",%.6f", s.roc.auc);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", row.match.overall.auc);
    os << buf;
  }
  return os.str();
}

}  // namespace photocon
