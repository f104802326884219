#include "latticebc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace latticebc {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string body = trim(s);
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']')
      throw std::invalid_argument("config: unterminated list: " + s);
    body = body.substr(1, body.size() - 2);
  }
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(unquote(item));
  }
  return out;
}

double to_num(const std::string& s) {
  size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size())
    throw std::invalid_argument("config: not a number: " + s);
  return v;
}

}  // namespace

StudyConfig StudyConfig::parse_string(const std::string& text) {
  StudyConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "defect") {
      cfg.defect = unquote(val);
    } else if (key == "schemes") {
      cfg.schemes = split_list(val);
    } else if (key == "k_ladder") {
      cfg.k_ladder.clear();
      for (const auto& t : split_list(val)) cfg.k_ladder.push_back(int(to_num(t)));
    } else if (key == "k_ref") {
      cfg.k_ref = int(to_num(val));
    } else if (key == "core_position") {
      auto v = split_list(val);
      if (v.size() != 2) throw std::invalid_argument("config: core_position needs 2 entries");
      cfg.core_position = Vec2(to_num(v[0]), to_num(v[1]));
    } else if (key == "shear_f") {
      auto v = split_list(val);
      if (v.size() != 2) throw std::invalid_argument("config: shear_f needs 2 entries");
      cfg.shear_f = Vec2(to_num(v[0]), to_num(v[1]));
    } else if (key == "tol") {
      cfg.tol = to_num(val);
    } else if (key == "seed") {
      cfg.seed = long(to_num(val));
    } else if (key == "mesh_beta") {
      cfg.mesh_beta = to_num(val);
    } else if (key == "lin_outer_cap") {
      cfg.lin_outer_cap = int(to_num(val));
    } else if (key == "record_timings") {
      std::string v = unquote(val);
      cfg.record_timings = (v == "true" || v == "1" || v == "yes");
    } else if (key == "workers") {
      cfg.workers = int(to_num(val));
    } else {
      throw std::invalid_argument("config: unknown key: " + key);
    }
  }
  cfg.apply_defaults();
  return cfg;
}

StudyConfig StudyConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

void StudyConfig::apply_defaults() {
  bool disl = defect == "screw";
  if (k_ladder.empty())
    k_ladder = disl ? std::vector<int>{8, 12, 17, 25, 36}
                    : std::vector<int>{6, 9, 13, 19, 28, 42};
  if (k_ref == 0) k_ref = disl ? 110 : 128;
  if (mesh_beta == 0.0) mesh_beta = disl ? 1.0 : 1.5;
}

Problem StudyConfig::make_problem() const {
  if (defect == "vacancy") return Problem::vacancy();
  if (defect == "interstitial") return Problem::interstitial();
  if (defect == "none") return Problem::none();
  if (defect == "screw") return Problem::screw(core_position, shear_f);
  throw std::invalid_argument("config: unknown defect: " + defect);
}

SchemeOptions StudyConfig::scheme_options() const {
  SchemeOptions o;
  o.minimize.tol = tol;
  o.lin_outer_cap = lin_outer_cap;
  if (defect == "screw")
    o.ac_beta_disl = mesh_beta;
  else
    o.ac_beta_point = mesh_beta;
  return o;
}

namespace {

SchemeKind kind_of(const std::string& s) {
  if (s == "dir") return SchemeKind::Dir;
  if (s == "per") return SchemeKind::Per;
  if (s == "lin") return SchemeKind::Lin;
  if (s == "ac") return SchemeKind::Ac;
  throw std::invalid_argument("unknown scheme: " + s);
}

void write_record(FILE* f, const ConvergenceRecord& r) {
  fprintf(f, "%s,%s,%d,%d,", r.scheme.c_str(), r.defect.c_str(), r.K, r.N_inner);
  if (r.converged)
    fprintf(f, "%.12e,%.12e,", r.geom_error, r.energy_error);
  else
    fprintf(f, ",,");
  fprintf(f, "%d,%.6f\n", r.iterations, r.wall_time);
}

struct GuideSlopes {
  double geom = 0.0, energy = 0.0;
  bool has_energy = true;
};

GuideSlopes guide_slopes(const std::string& scheme, const std::string& defect) {
  bool disl = defect == "screw";
  GuideSlopes g;
  if (scheme == "dir" || scheme == "per") {
    g.geom = -0.5;
    g.energy = -1.0;
  } else if (scheme == "lin") {
    g.geom = disl ? -0.5 : -1.5;
    g.energy = disl ? -1.0 : -2.0;
  } else if (scheme == "ac") {
    g.geom = disl ? -0.5 : -1.0;
    g.has_energy = false;
  }
  return g;
}

}  // namespace

std::vector<ConvergenceRecord> run_study(const StudyConfig& cfg,
                                         const std::string& out_csv) {
  std::vector<std::pair<std::string, int>> jobs;
  for (const auto& s : cfg.schemes)
    for (int K : cfg.k_ladder) jobs.push_back({s, K});

  std::vector<ConvergenceRecord> records(jobs.size());
  if (!jobs.empty()) {
    Problem prob = cfg.make_problem();
    SchemeOptions opts = cfg.scheme_options();
    ReferenceSolution ref = solve_reference(prob, cfg.k_ref, opts);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        size_t j = next.fetch_add(1);
        if (j >= jobs.size()) return;
        ConvergenceRecord rec;
        rec.scheme = jobs[j].first;
        rec.defect = cfg.defect;
        rec.K = jobs[j].second;
        try {
          SchemeResult res = solve_scheme(kind_of(jobs[j].first), prob, rec.K, opts);
          rec.N_inner = res.n_inner;
          rec.iterations = res.report.iterations;
          rec.wall_time = cfg.record_timings ? res.report.wall_time : 0.0;
          rec.converged = res.report.converged;
          if (rec.converged) {
            rec.geom_error = geometry_error(ref, res);
            rec.energy_error = energy_error(ref, res);
          }
        } catch (const std::exception&) {
          rec.converged = false;
        }
        records[j] = std::move(rec);
      }
    };
    int nw = cfg.workers > 0 ? cfg.workers
                             : int(std::thread::hardware_concurrency());
    nw = std::max(1, std::min<int>(nw, int(jobs.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!out_csv.empty()) emit_plotdata(records, out_csv);
  return records;
}

std::vector<ConvergenceRecord> slice_records(
    const std::vector<ConvergenceRecord>& records, const std::string& scheme) {
  std::vector<ConvergenceRecord> out;
  for (const auto& r : records)
    if (r.scheme == scheme) out.push_back(r);
  return out;
}

RateFit fit_rate(const std::vector<ConvergenceRecord>& records,
                 const std::string& field) {
  if (field != "geom" && field != "energy")
    throw std::invalid_argument("fit_rate: field must be geom or energy");
  // largest contiguous run of converged records with positive error
  auto usable = [&](const ConvergenceRecord& r) {
    double e = field == "geom" ? r.geom_error : r.energy_error;
    return r.converged && e > 0.0 && std::isfinite(e);
  };
  size_t best_lo = 0, best_len = 0;
  size_t i = 0;
  while (i < records.size()) {
    if (!usable(records[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < records.size() && usable(records[j])) ++j;
    if (j - i > best_len) {
      best_len = j - i;
      best_lo = i;
    }
    i = j;
  }
  if (best_len < 3)
    throw std::invalid_argument("fit_rate: need at least 3 converged records");

  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  double n = double(best_len);
  for (size_t k = best_lo; k < best_lo + best_len; ++k) {
    double x = std::log(double(records[k].N_inner));
    double y = std::log(field == "geom" ? records[k].geom_error
                                        : records[k].energy_error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  RateFit fit;
  double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = syy - sy * sy / n - fit.slope * (sxy - sx * sy / n);
  double ss_tot = syy - sy * sy / n;
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.K_first = records[best_lo].K;
  fit.K_last = records[best_lo + best_len - 1].K;
  fit.npoints = int(best_len);
  return fit;
}

void emit_plotdata(const std::vector<ConvergenceRecord>& records,
                   const std::string& path) {
  std::string tmp = path + ".tmp";
  FILE* f = fopen(tmp.c_str(), "w");
  if (!f) throw std::runtime_error("emit_plotdata: cannot open " + path);
  fprintf(f, "scheme,defect,K,N,geom_error,energy_error,iterations,wall_time_s\n");
  for (const auto& r : records) write_record(f, r);

  // guide lines anchored at the first converged record of each scheme
  std::vector<std::string> seen;
  for (const auto& r : records) {
    if (std::find(seen.begin(), seen.end(), r.scheme) != seen.end()) continue;
    seen.push_back(r.scheme);
    const ConvergenceRecord* anchor = nullptr;
    for (const auto& q : records)
      if (q.scheme == r.scheme && q.converged) {
        anchor = &q;
        break;
      }
    if (!anchor) continue;
    GuideSlopes gs = guide_slopes(r.scheme, r.defect);
    for (const auto& q : records) {
      if (q.scheme != r.scheme) continue;
      double ratio = double(q.N_inner) / double(anchor->N_inner);
      fprintf(f, "guide,%s,%d,%d,%.12e,", r.defect.c_str(), q.K, q.N_inner,
              anchor->geom_error * std::pow(ratio, gs.geom));
      if (gs.has_energy)
        fprintf(f, "%.12e,", anchor->energy_error * std::pow(ratio, gs.energy));
      else
        fprintf(f, ",");
      fprintf(f, "0,0.000000\n");
    }
  }
  fclose(f);
  if (rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("emit_plotdata: cannot write " + path);
}

std::vector<ConvergenceRecord> parse_plotdata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_plotdata: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("parse_plotdata: empty file");
  std::vector<ConvergenceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 8) cells.push_back("");
    if (cells[0] == "guide") continue;
    ConvergenceRecord r;
    r.scheme = cells[0];
    r.defect = cells[1];
    r.K = std::stoi(cells[2]);
    r.N_inner = std::stoi(cells[3]);
    r.converged = !cells[4].empty();
    if (r.converged) {
      r.geom_error = std::stod(cells[4]);
      r.energy_error = std::stod(cells[5]);
    }
    r.iterations = std::stoi(cells[6]);
    r.wall_time = std::stod(cells[7]);
    out.push_back(r);
  }
  return out;
}

}  // namespace latticebc
