#include "railsched/mps.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace railsched::mps {

namespace {

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string write_mps(const model::StandardFormProblem& sp, const std::string& name) {
  if (!sp.objective.is_linear())
    throw std::invalid_argument("write_mps: only the linearized objective is exportable");
  const auto& lp = sp.lp;
  const int n = lp.cols(), m = lp.rows();

  std::map<int, std::string> colname;
  for (const auto& [nm, info] : sp.var_index)
    if (info.col >= 0) colname[info.col] = nm;
  for (int j = 0; j < n; ++j)
    if (!colname.count(j)) colname[j] = "x" + std::to_string(j);

  std::ostringstream out;
  out << "* Rolling-horizon rescheduling window export\n"
      << "* columns: <role>_p<platform>_k<slot>; order flags "
         "xi_p<p>_k<k>__p<p'>_k<k'> pair the flagged slot with its depot sibling\n"
      << "* rows: R<i> in constraint order; ranged rows carry a RANGES entry\n"
      << "NAME " << name << "\n";

  out << "ROWS\n N OBJ\n";
  std::vector<char> sense(static_cast<size_t>(m), ' ');
  for (int i = 0; i < m; ++i) {
    const bool has_lo = std::isfinite(lp.row_lo[i]);
    const bool has_hi = std::isfinite(lp.row_hi[i]);
    char s;
    if (has_lo && has_hi)
      s = lp.row_lo[i] == lp.row_hi[i] ? 'E' : 'L';  // ranged as L + RANGES
    else if (has_hi)
      s = 'L';
    else
      s = 'G';
    sense[size_t(i)] = s;
    out << " " << s << " R" << i << "\n";
  }

  out << "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (int j = 0; j < n; ++j) {
    const bool is_int = sp.is_int[size_t(j)] != 0;
    if (is_int != in_int) {
      out << "    MARKER" << marker++ << " 'MARKER' " << (is_int ? "'INTORG'" : "'INTEND'")
          << "\n";
      in_int = is_int;
    }
    const auto& cn = colname[j];
    if (lp.c[j] != 0) out << "    " << cn << " OBJ " << num(lp.c[j]) << "\n";
    for (Eigen::SparseMatrix<double>::InnerIterator it(lp.A, j); it; ++it)
      out << "    " << cn << " R" << it.row() << " " << num(it.value()) << "\n";
  }
  if (in_int) out << "    MARKER" << marker++ << " 'MARKER' 'INTEND'\n";

  out << "RHS\n";
  for (int i = 0; i < m; ++i) {
    double rhs;
    if (sense[size_t(i)] == 'G')
      rhs = lp.row_lo[i];
    else
      rhs = lp.row_hi[i];
    if (rhs != 0) out << "    RHS R" << i << " " << num(rhs) << "\n";
  }

  bool any_range = false;
  for (int i = 0; i < m; ++i)
    if (sense[size_t(i)] == 'L' && std::isfinite(lp.row_lo[i]) && lp.row_lo[i] != lp.row_hi[i])
      any_range = true;
  if (any_range) {
    out << "RANGES\n";
    for (int i = 0; i < m; ++i)
      if (sense[size_t(i)] == 'L' && std::isfinite(lp.row_lo[i]) && lp.row_lo[i] != lp.row_hi[i])
        out << "    RNG R" << i << " " << num(lp.row_hi[i] - lp.row_lo[i]) << "\n";
  }

  out << "BOUNDS\n";
  for (int j = 0; j < n; ++j) {
    const auto& cn = colname[j];
    const bool has_lo = std::isfinite(lp.lo[j]);
    const bool has_hi = std::isfinite(lp.hi[j]);
    const bool is_int = sp.is_int[size_t(j)] != 0;
    if (has_lo && has_hi && lp.lo[j] == lp.hi[j]) {
      out << " FX BND " << cn << " " << num(lp.lo[j]) << "\n";
      continue;
    }
    if (has_lo)
      out << (is_int ? " LI BND " : " LO BND ") << cn << " " << num(lp.lo[j]) << "\n";
    else
      out << " MI BND " << cn << "\n";
    if (has_hi) out << (is_int ? " UI BND " : " UP BND ") << cn << " " << num(lp.hi[j]) << "\n";
  }
  out << "ENDATA\n";
  return out.str();
}

void save_mps(const model::StandardFormProblem& sp, const std::string& path,
              const std::string& name) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write MPS file: " + path);
  f << write_mps(sp, name);
}

}  // namespace railsched::mps
