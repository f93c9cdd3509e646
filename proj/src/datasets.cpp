#include "deepssm/datasets.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace deepssm::data {

namespace {

void channel_stats(const Vec& x, std::int64_t dim, Vec& mean, Vec& std,
                   const char* what) {
  const std::int64_t n = static_cast<std::int64_t>(x.size()) / dim;
  mean.assign(static_cast<size_t>(dim), 0.0);
  std.assign(static_cast<size_t>(dim), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t d = 0; d < dim; ++d)
      mean[static_cast<size_t>(d)] += x[static_cast<size_t>(i * dim + d)];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t d = 0; d < dim; ++d) {
      const double c =
          x[static_cast<size_t>(i * dim + d)] - mean[static_cast<size_t>(d)];
      std[static_cast<size_t>(d)] += c * c;
    }
  for (std::int64_t d = 0; d < dim; ++d) {
    auto& s = std[static_cast<size_t>(d)];
    s = std::sqrt(s / static_cast<double>(n));
    if (s <= 0.0)
      throw ValueError(std::string("zero-variance ") + what + " channel " +
                       std::to_string(d) + "; cannot normalize");
  }
}

}  // namespace

NormStats compute_stats(const SequenceDataset& ds) {
  NormStats s;
  channel_stats(ds.u, ds.u_dim, s.u_mean, s.u_std, "input");
  channel_stats(ds.y, ds.y_dim, s.y_mean, s.y_std, "output");
  return s;
}

namespace {

Vec apply_affine(const Vec& x, std::int64_t dim, const Vec& mean,
                 const Vec& std, bool forward) {
  Vec out(x.size());
  const std::int64_t n = static_cast<std::int64_t>(x.size()) / dim;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t d = 0; d < dim; ++d) {
      const size_t idx = static_cast<size_t>(i * dim + d);
      const size_t c = static_cast<size_t>(d);
      out[idx] = forward ? (x[idx] - mean[c]) / std[c]
                         : x[idx] * std[c] + mean[c];
    }
  return out;
}

}  // namespace

SequenceDataset normalize(const SequenceDataset& ds, const NormStats& st) {
  SequenceDataset out = ds;
  out.u = apply_affine(ds.u, ds.u_dim, st.u_mean, st.u_std, true);
  out.y = apply_affine(ds.y, ds.y_dim, st.y_mean, st.y_std, true);
  return out;
}

SequenceDataset denormalize(const SequenceDataset& ds, const NormStats& st) {
  SequenceDataset out = ds;
  out.u = apply_affine(ds.u, ds.u_dim, st.u_mean, st.u_std, false);
  out.y = apply_affine(ds.y, ds.y_dim, st.y_mean, st.y_std, false);
  return out;
}

Vec gen_input(InputKind kind, std::int64_t n, Rng& rng) {
  if (n < 1) throw ValueError("gen_input: n must be >= 1");
  Vec u(static_cast<size_t>(n));
  if (kind == InputKind::Uniform) {
    for (auto& v : u) v = rng.uniform(-2.5, 2.5);
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const double k = static_cast<double>(i + 1);
      u[static_cast<size_t>(i)] = std::sin(2.0 * k * std::numbers::pi / 10.0) +
                                  std::sin(2.0 * k * std::numbers::pi / 25.0);
    }
  }
  return u;
}

LinearSystem toy_linear_system(bool noise_as_variance) {
  const double q = noise_as_variance ? 0.5 : 0.25;
  return {{0.7, 0.8, 0.0, 0.1}, {-1.0, 0.1}, {1.0, 0.0},
          {q, 0.0, 0.0, q},     1.0};
}

SequenceDataset simulate_linear(const LinearSystem& sys, const Vec& u,
                                Rng& rng, bool noise) {
  if (sys.Q[1] != 0.0 || sys.Q[2] != 0.0)
    throw ValueError("simulate_linear: Q must be diagonal");
  const double s1 = std::sqrt(sys.Q[0]), s2 = std::sqrt(sys.Q[3]),
               sw = std::sqrt(sys.R);
  SequenceDataset ds;
  ds.u = u;
  ds.y.resize(u.size());
  double x1 = 0.0, x2 = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    const double nx1 = sys.A[0] * x1 + sys.A[1] * x2 + sys.B[0] * u[k] +
                       (noise ? s1 * rng.normal() : 0.0);
    const double nx2 = sys.A[2] * x1 + sys.A[3] * x2 + sys.B[1] * u[k] +
                       (noise ? s2 * rng.normal() : 0.0);
    x1 = nx1;
    x2 = nx2;
    ds.y[k] = sys.C[0] * x1 + sys.C[1] * x2 + (noise ? sw * rng.normal() : 0.0);
  }
  ds.provenance = noise ? "simulate_linear" : "simulate_linear(noiseless)";
  return ds;
}

double narendra_li_output(double x1, double x2) {
  return x1 / (1.0 + 0.5 * std::sin(x2)) + x2 / (1.0 + 0.5 * std::sin(x1));
}

std::pair<double, double> narendra_li_transition(double x1, double x2,
                                                 double u) {
  const double n1 = (x1 / (1.0 + x1 * x1) + 1.0) * std::sin(x2);
  const double n2 = x2 * std::cos(x2) +
                    x1 * std::exp(-(x1 * x1 + x2 * x2) / 8.0) +
                    u * u * u / (1.0 + u * u + 0.5 * std::cos(x1 + x2));
  return {n1, n2};
}

SequenceDataset simulate_narendra_li(const Vec& u, Rng& rng,
                                     double meas_noise_var) {
  const double se = meas_noise_var > 0.0 ? std::sqrt(meas_noise_var) : 0.0;
  SequenceDataset ds;
  ds.u = u;
  ds.y.resize(u.size());
  double x1 = 0.0, x2 = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    auto [n1, n2] = narendra_li_transition(x1, x2, u[k]);
    x1 = n1;
    x2 = n2;
    ds.y[k] =
        narendra_li_output(x1, x2) + (se > 0.0 ? se * rng.normal() : 0.0);
  }
  ds.provenance = "simulate_narendra_li";
  return ds;
}

// --------------------------------------------------------------- CSV I/O

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

SequenceDataset load_csv_dataset(const std::string& path,
                                 const std::vector<std::string>& u_cols,
                                 const std::vector<std::string>& y_cols) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty dataset file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  auto col_index = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("dataset " + path + " is missing column '" + name + "'");
  };
  std::vector<size_t> ui, yi;
  for (const auto& c : u_cols) ui.push_back(col_index(c));
  for (const auto& c : y_cols) yi.push_back(col_index(c));

  SequenceDataset ds;
  ds.u_dim = static_cast<std::int64_t>(ui.size());
  ds.y_dim = static_cast<std::int64_t>(yi.size());
  ds.provenance = path;
  std::int64_t row = 1;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw IoError("dataset " + path + ": row " + std::to_string(row) +
                    " has " + std::to_string(cells.size()) +
                    " cells, header has " + std::to_string(header.size()));
    auto parse = [&](size_t ci) {
      try {
        size_t used = 0;
        const double v = std::stod(cells[ci], &used);
        if (used != cells[ci].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw IoError("dataset " + path + ": non-numeric cell at row " +
                      std::to_string(row) + ", column '" + header[ci] + "'");
      }
    };
    for (size_t c : ui) ds.u.push_back(parse(c));
    for (size_t c : yi) ds.y.push_back(parse(c));
  }
  if (ds.u.empty()) throw IoError("dataset " + path + " has no data rows");

  // optional key=value sidecar
  std::ifstream meta(path + ".meta");
  if (meta) {
    std::string ml;
    while (std::getline(meta, ml)) {
      const auto eq = ml.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = ml.substr(0, eq), val = ml.substr(eq + 1);
      if (key == "sample_rate") ds.sample_rate = std::stod(val);
      if (key == "provenance") ds.provenance = val;
    }
  }
  return ds;
}

void save_csv(const SequenceDataset& ds, const std::string& path,
              bool write_meta) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write dataset file " + path);
  os.precision(17);
  for (std::int64_t d = 0; d < ds.u_dim; ++d) os << (d ? "," : "") << 'u' << d;
  for (std::int64_t d = 0; d < ds.y_dim; ++d) os << ",y" << d;
  os << '\n';
  const std::int64_t T = ds.length();
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t d = 0; d < ds.u_dim; ++d)
      os << (d ? "," : "") << ds.u[static_cast<size_t>(t * ds.u_dim + d)];
    for (std::int64_t d = 0; d < ds.y_dim; ++d)
      os << ',' << ds.y[static_cast<size_t>(t * ds.y_dim + d)];
    os << '\n';
  }
  if (write_meta) {
    std::ofstream ms(path + ".meta");
    ms.precision(17);
    ms << "provenance=" << ds.provenance << '\n';
    if (ds.sample_rate > 0.0) ms << "sample_rate=" << ds.sample_rate << '\n';
  }
}

// ----------------------------------------------------------------- Kalman

double kalman_log_likelihood(const LinearSystem& sys, const Vec& u,
                             const Vec& y) {
  if (u.size() != y.size())
    throw ShapeError("kalman_log_likelihood: u and y lengths differ");
  if (u.empty()) throw ValueError("kalman_log_likelihood: empty sequence");
  const double *A = sys.A.data(), *B = sys.B.data(), *C = sys.C.data();
  double x1 = 0.0, x2 = 0.0;
  double P11 = 0.0, P12 = 0.0, P22 = 0.0;
  double ll = 0.0;
  constexpr double kLogTwoPi = 1.8378770664093453;
  for (size_t k = 0; k < u.size(); ++k) {
    // predict
    const double px1 = A[0] * x1 + A[1] * x2 + B[0] * u[k];
    const double px2 = A[2] * x1 + A[3] * x2 + B[1] * u[k];
    // P <- A P A' + Q (P symmetric)
    const double a11 = A[0] * P11 + A[1] * P12, a12 = A[0] * P12 + A[1] * P22;
    const double a21 = A[2] * P11 + A[3] * P12, a22 = A[2] * P12 + A[3] * P22;
    double nP11 = a11 * A[0] + a12 * A[1] + sys.Q[0];
    double nP12 = a11 * A[2] + a12 * A[3] + sys.Q[1];
    double nP22 = a21 * A[2] + a22 * A[3] + sys.Q[3];
    // innovation
    const double yhat = C[0] * px1 + C[1] * px2;
    const double S = C[0] * (nP11 * C[0] + nP12 * C[1]) +
                     C[1] * (nP12 * C[0] + nP22 * C[1]) + sys.R;
    if (S <= 0.0)
      throw NumericError("kalman_log_likelihood: non-positive innovation "
                         "variance at step " +
                         std::to_string(k + 1));
    const double e = y[k] - yhat;
    ll += -0.5 * (kLogTwoPi + std::log(S)) - e * e / (2.0 * S);
    // update
    const double K1 = (nP11 * C[0] + nP12 * C[1]) / S;
    const double K2 = (nP12 * C[0] + nP22 * C[1]) / S;
    x1 = px1 + K1 * e;
    x2 = px2 + K2 * e;
    const double c1 = 1.0 - K1 * C[0], c2 = -K1 * C[1];
    const double d1 = -K2 * C[0], d2 = 1.0 - K2 * C[1];
    const double uP11 = c1 * nP11 + c2 * nP12;
    const double uP12 = c1 * nP12 + c2 * nP22;
    const double uP12b = d1 * nP11 + d2 * nP12;
    const double uP22 = d1 * nP12 + d2 * nP22;
    P11 = uP11;
    P12 = 0.5 * (uP12 + uP12b);  // keep symmetric
    P22 = uP22;
  }
  return ll / static_cast<double>(u.size());
}

}  // namespace deepssm::data
