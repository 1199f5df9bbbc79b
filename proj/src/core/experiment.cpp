// SPDX-License-Identifier: Apache-2.0
#include "core/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace ddv {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  if (m.empty()) problems.push_back("m list is empty");
  for (int v : m)
    if (v < 1) problems.push_back("m must be >= 1 (got " + std::to_string(v) + ")");
  if (nsd.empty()) problems.push_back("nsd list is empty");
  for (int v : nsd)
    if (v < 1) problems.push_back("nsd must be >= 1 (got " + std::to_string(v) + ")");
  if (methods.empty()) problems.push_back("method list is empty");
  for (const auto& mth : methods)
    if (mth != "bdd" && mth != "feti" && mth != "monolithic")
      problems.push_back("unknown method '" + mth + "'");
  if (!(tol > 0.0)) problems.push_back("tol must be > 0");
  if (estimate_every < 1) problems.push_back("estimate_every must be >= 1");
  if (!(E > 0.0)) problems.push_back("E must be > 0");
  if (!(nu > -1.0 && nu < 0.5)) problems.push_back("nu must be in (-1, 0.5)");
  if (!(L > 0.0)) problems.push_back("L must be > 0");
  if (m_ref < 0) problems.push_back("m_ref must be >= 0");
  if (m_ref > 0)
    for (int v : m)
      if (v >= 1 && m_ref % v != 0)
        problems.push_back("m_ref must be a multiple of every m (violated by " +
                           std::to_string(v) + ")");
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

template <typename T>
std::vector<T> list_or_scalar(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid configuration: JSON parse failure: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("m")) cfg.m = list_or_scalar<int>(j["m"]);
    if (j.contains("nsd")) cfg.nsd = list_or_scalar<int>(j["nsd"]);
    if (j.contains("methods")) cfg.methods = list_or_scalar<std::string>(j["methods"]);
    if (j.contains("method")) cfg.methods = list_or_scalar<std::string>(j["method"]);
    if (j.contains("tol")) cfg.tol = j["tol"].get<double>();
    if (j.contains("estimate_every")) cfg.estimate_every = j["estimate_every"].get<int>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    if (j.contains("E")) cfg.E = j["E"].get<double>();
    if (j.contains("nu")) cfg.nu = j["nu"].get<double>();
    if (j.contains("traction")) {
      const auto t = j["traction"].get<std::vector<double>>();
      if (t.size() != 2) throw ConfigError("invalid configuration: traction needs 2 entries");
      cfg.traction_x = t[0];
      cfg.traction_y = t[1];
    }
    if (j.contains("L")) cfg.L = j["L"].get<double>();
    if (j.contains("m_ref")) cfg.m_ref = j["m_ref"].get<int>();
    if (j.contains("map_iterations"))
      cfg.map_iterations = list_or_scalar<int>(j["map_iterations"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("invalid configuration: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json_text(ss.str());
}

std::unique_ptr<Pipeline> make_pipeline(int m, int nsd, const ExperimentConfig& cfg) {
  auto p = std::make_unique<Pipeline>();
  p->mesh = build_gamma_mesh(m, cfg.L);
  p->partition = partition_mesh(p->mesh, nsd);
  p->hooke = hooke_plane_stress(cfg.E, cfg.nu);
  p->loads.traction = Eigen::Vector2d(cfg.traction_x, cfg.traction_y);
  p->subs = build_subdomains(p->mesh, p->partition, p->hooke, p->loads);
  p->ops = build_assembly_operators(interface_layout(p->mesh, p->partition, p->subs));
  p->ctx = std::make_unique<RecoveryContext>(
      make_recovery_context(p->mesh, p->partition, p->subs, p->ops, p->hooke, p->loads));
  return p;
}

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

struct Cell {
  CellResult result;
  std::vector<std::tuple<int, double, std::optional<double>>> convergence;  // n, r, est
};

Cell run_cell(const ExperimentConfig& cfg, int m, int nsd, const std::string& method_str,
              double e_seq, const Mesh& mesh) {
  auto p = make_pipeline(m, nsd, cfg);
  const Method method = (method_str == "bdd") ? Method::BDD : Method::FETI;

  Cell cell;
  cell.result.m = m;
  cell.result.nsd = nsd;
  cell.result.method = method_str;
  cell.result.e_seq = e_seq;

  std::optional<EstimateReport> last;
  auto hook = [&](const SolverState& st) {
    std::optional<double> est;
    if (st.iteration >= 1 && st.iteration % cfg.estimate_every == 0) {
      last = estimate_at_iteration(*p->ctx, st);
      est = last->e_cr_global;
    }
    cell.convergence.emplace_back(st.iteration, st.residual, est);
  };
  const SolverState final_state =
      interface_solve(method, p->subs, p->ops, {.tol = cfg.tol}, hook);
  if (!last || last->iteration != final_state.iteration)
    last = estimate_at_iteration(*p->ctx, final_state);

  cell.result.iterations = final_state.iteration;
  cell.result.residual = final_state.residual;
  cell.result.e_para = last->e_cr_global;

  // Artifacts.
  const std::string tag = method_str + "_" + std::to_string(m) + "_" + std::to_string(nsd);
  {
    std::ofstream f(fs::path(cfg.out_dir) / ("convergence_" + tag + ".csv"));
    f << "iteration,residual,e_para\n";
    for (const auto& [n, r, est] : cell.convergence)
      f << n << "," << fmt(r) << "," << (est ? fmt(*est) : "") << "\n";
  }
  export_history_csv(final_state, (fs::path(cfg.out_dir) / ("history_" + tag + ".csv")).string());
  export_report_json(*last, (fs::path(cfg.out_dir) / ("report_" + tag + ".json")).string());
  export_element_map_csv(
      mesh, *last, (fs::path(cfg.out_dir) / ("element_map_" + tag + "_final.csv")).string());
  for (int it : cfg.map_iterations) {
    // Maps at requested intermediate iterations need a fresh recovery.
    if (it < 1 || it > final_state.iteration) continue;
    auto map_hook = [&](const SolverState& st) {
      if (st.iteration != it) return;
      const EstimateReport rep = estimate_at_iteration(*p->ctx, st);
      export_element_map_csv(mesh, rep,
                             (fs::path(cfg.out_dir) /
                              ("element_map_" + tag + "_iter" + std::to_string(it) + ".csv"))
                                 .string());
    };
    interface_solve(method, p->subs, p->ops, {.tol = cfg.tol}, map_hook);
  }
  return cell;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const HookeTensor hooke = hooke_plane_stress(cfg.E, cfg.nu);
  LoadSpec loads;
  loads.traction = Eigen::Vector2d(cfg.traction_x, cfg.traction_y);

  std::optional<Reference> ref;
  if (cfg.m_ref > 0) ref = build_reference(cfg.m_ref, cfg.L, hooke, loads);

  // Column layout: one parallel-estimate column per (method, nsd).
  std::vector<std::pair<std::string, int>> para_cols;
  for (const auto& mth : cfg.methods) {
    if (mth == "monolithic") continue;
    for (int nsd : cfg.nsd)
      if (nsd >= 2) para_cols.emplace_back(mth, nsd);
  }

  ExperimentResult result;
  std::ostringstream table;
  table << "m,h,dofs,e_h,e_seq";
  for (const auto& [mth, nsd] : para_cols)
    table << ",e_para_" << mth << "_" << nsd;
  table << "\n";

  for (int m : cfg.m) {
    const Mesh mesh = build_gamma_mesh(m, cfg.L);
    const Eigen::VectorXd u_mono = solve_monolithic(assemble_system(mesh, hooke, loads));
    std::optional<double> e_h;
    if (ref) e_h = true_error(mesh, u_mono, *ref, hooke);

    // Sequential baseline: the same pipeline on a single subdomain.
    double e_seq;
    {
      auto p = make_pipeline(m, 1, cfg);
      const SolverState st = bdd_solve(p->subs, p->ops);
      e_seq = estimate_at_iteration(*p->ctx, st).e_cr_global;
    }

    table << m << "," << fmt(cfg.L / m) << "," << mesh.num_dofs() << ","
          << (e_h ? fmt(*e_h) : "") << "," << fmt(e_seq);
    for (const auto& [mth, nsd] : para_cols) {
      // Keep at least three triangles per subdomain; finer splits of a coarse
      // mesh are left blank in the summary table.
      if (nsd > 2 * m * m) {
        table << ",";
        continue;
      }
      Cell cell = run_cell(cfg, m, nsd, mth, e_seq, mesh);
      cell.result.e_h = e_h;
      table << "," << fmt(cell.result.e_para);
      result.cells.push_back(cell.result);
    }
    if (std::find(cfg.methods.begin(), cfg.methods.end(), "monolithic") != cfg.methods.end()) {
      CellResult mono;
      mono.m = m;
      mono.nsd = 1;
      mono.method = "monolithic";
      mono.e_seq = e_seq;
      mono.e_para = e_seq;
      mono.e_h = e_h;
      result.cells.push_back(mono);
    }
    table << "\n";
  }

  result.table_path = (fs::path(cfg.out_dir) / "table1.csv").string();
  std::ofstream(result.table_path) << table.str();
  return result;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

std::string compare_reports(const std::string& table_csv_path) {
  std::ifstream f(table_csv_path);
  if (!f) throw ConfigError("invalid configuration: cannot read " + table_csv_path);
  std::string line;
  if (!std::getline(f, line)) return "";
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_m = col("m"), c_h = col("h"), c_eh = col("e_h"), c_seq = col("e_seq");
  std::vector<int> c_para;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("e_para_", 0) == 0) c_para.push_back(static_cast<int>(i));

  std::ostringstream out;
  out << std::fixed;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto row = split_csv(line);
    auto get = [&](int c) -> std::string { return (c >= 0 && c < (int)row.size()) ? row[c] : ""; };
    out << "m=" << get(c_m) << " h=" << get(c_h);
    const std::string eh = get(c_eh), seq = get(c_seq);
    if (!eh.empty() && !seq.empty()) {
      const double e_h = std::stod(eh), e_seq = std::stod(seq);
      out << " effectivity=" << std::setprecision(2) << (e_seq / e_h);
    }
    if (!seq.empty() && !c_para.empty()) {
      const double e_seq = std::stod(seq);
      double worst = -1.0;
      std::string worst_col;
      for (int c : c_para) {
        if (get(c).empty()) continue;
        const double dev = std::abs(std::stod(get(c)) - e_seq) / e_seq;
        if (dev > worst) {
          worst = dev;
          worst_col = header[c];
        }
      }
      if (worst >= 0.0)
        out << " max_deviation=" << std::setprecision(1) << 100.0 * worst << "% (" << worst_col
            << ")";
    }
    out << "\n";
  }

  // Stagnation iteration per run: first estimate within 1% of the final one.
  std::vector<fs::path> conv;
  const fs::path dir = fs::path(table_csv_path).parent_path();
  if (fs::exists(dir))
    for (const auto& entry : fs::directory_iterator(dir.empty() ? fs::path(".") : dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("convergence_", 0) == 0 && name.size() > 4 &&
          name.substr(name.size() - 4) == ".csv")
        conv.push_back(entry.path());
    }
  std::sort(conv.begin(), conv.end());
  for (const auto& path : conv) {
    std::ifstream cf(path);
    std::string cline;
    std::getline(cf, cline);  // header
    std::vector<std::pair<int, double>> ests;
    while (std::getline(cf, cline)) {
      const auto row = split_csv(cline);
      if (row.size() >= 3 && !row[2].empty())
        ests.emplace_back(std::stoi(row[0]), std::stod(row[2]));
    }
    if (ests.empty()) continue;
    const double final_est = ests.back().second;
    int stag = ests.back().first;
    for (const auto& [n, e] : ests)
      if (std::abs(e - final_est) <= 0.01 * std::abs(final_est)) {
        stag = n;
        break;
      }
    out << "stagnation " << path.filename().string() << ": " << stag << "\n";
  }
  return out.str();
}

}  // namespace ddv
