#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace oracle {

double rmse(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(s / p.size());
}

double mae(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - t[i]);
  return s / p.size();
}

double mape(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs((p[i] - t[i]) / t[i]);
  return 100.0 * s / p.size();
}

double smape(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::fabs(p[i]) + std::fabs(t[i]);
    if (d >= 1e-12) s += 2.0 * std::fabs(p[i] - t[i]) / d;
  }
  return 100.0 * s / p.size();
}

double sharpe(const std::vector<double>& r) {
  double m = 0;
  for (double x : r) m += x;
  m /= r.size();
  double v = 0;
  for (double x : r) v += (x - m) * (x - m);
  return m / std::sqrt(v / (r.size() - 1));
}

namespace {

std::size_t tail_size(std::size_t n, double alpha) {
  std::size_t m = 1;
  while (static_cast<double>(m) < alpha * static_cast<double>(n) - 1e-9) ++m;
  return m;
}

}  // namespace

double var(const std::vector<double>& r, double alpha) {
  std::vector<double> s = r;
  std::sort(s.begin(), s.end());
  return -s[tail_size(r.size(), alpha) - 1];
}

double es(const std::vector<double>& r, double alpha) {
  std::vector<double> s = r;
  std::sort(s.begin(), s.end());
  const double q = s[tail_size(r.size(), alpha) - 1];
  double total = 0;
  int n = 0;
  for (double x : r) {
    if (x <= q) {
      total += x;
      ++n;
    }
  }
  return -total / n;
}

namespace {

Rows pool(const WindowList& w) {
  Rows out;
  for (const auto& win : w)
    for (const auto& row : win) out.push_back(row);
  return out;
}

std::vector<std::vector<double>> cov_matrix(const Rows& rows) {
  const std::size_t d = rows[0].size();
  const std::size_t n = rows.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / n;
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0;
      for (const auto& r : rows) s += (r[a] - mean[a]) * (r[b] - mean[b]);
      c[a][b] = s / (n - 1);
    }
  return c;
}

std::vector<std::vector<double>> corr_matrix(const Rows& rows) {
  auto c = cov_matrix(rows);
  const std::size_t d = c.size();
  std::vector<std::vector<double>> out(d, std::vector<double>(d));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) out[a][b] = c[a][b] / std::sqrt(c[a][a] * c[b][b]);
  return out;
}

double frobenius_diff(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  double s = 0;
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < x.size(); ++b) s += (x[a][b] - y[a][b]) * (x[a][b] - y[a][b]);
  return std::sqrt(s);
}

double window_acf(const Rows& w, std::size_t j, int lag) {
  const std::size_t n = w.size();
  double m = 0;
  for (const auto& r : w) m += r[j];
  m /= n;
  double den = 0, num = 0;
  for (std::size_t t = 0; t < n; ++t) den += (w[t][j] - m) * (w[t][j] - m);
  if (den <= 0) return 0.0;
  for (std::size_t t = lag; t < n; ++t) num += (w[t - lag][j] - m) * (w[t][j] - m);
  return num / den;
}

}  // namespace

double marginal(const WindowList& real, const WindowList& fake, int bins) {
  const Rows r = pool(real), f = pool(fake);
  const std::size_t d = r[0].size();
  double total = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double lo = r[0][j], hi = r[0][j];
    for (const auto* set : {&r, &f})
      for (const auto& row : *set) {
        lo = std::min(lo, row[j]);
        hi = std::max(hi, row[j]);
      }
    auto hist = [&](const Rows& rows) {
      std::vector<double> h(bins, 0.0);
      for (const auto& row : rows) {
        int b = 0;
        if (hi > lo) {
          b = static_cast<int>(std::floor((row[j] - lo) / ((hi - lo) / bins)));
          if (b >= bins) b = bins - 1;
          if (b < 0) b = 0;
        }
        h[b] += 1.0 / rows.size();
      }
      return h;
    };
    const auto hr = hist(r), hf = hist(f);
    double s = 0;
    for (int b = 0; b < bins; ++b) s += (hr[b] - hf[b]) * (hr[b] - hf[b]);
    total += std::sqrt(s);
  }
  return total / d;
}

double correlation(const WindowList& real, const WindowList& fake) {
  if (real[0][0].size() < 2) return 0.0;
  return frobenius_diff(corr_matrix(pool(real)), corr_matrix(pool(fake)));
}

double covariance(const WindowList& real, const WindowList& fake) {
  return frobenius_diff(cov_matrix(pool(real)), cov_matrix(pool(fake)));
}

double autocorrelation(const WindowList& real, const WindowList& fake, int max_lag) {
  const std::size_t d = real[0][0].size();
  double total = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0;
    for (int lag = 1; lag <= max_lag; ++lag) {
      double ar = 0, af = 0;
      for (const auto& w : real) ar += window_acf(w, j, lag);
      for (const auto& w : fake) af += window_acf(w, j, lag);
      ar /= real.size();
      af /= fake.size();
      s += (ar - af) * (ar - af);
    }
    total += std::sqrt(s);
  }
  return total / d;
}

double naive_last_rmse(const Rows& test, std::size_t p, std::size_t q, std::size_t stride) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t start = 0; start + p + q <= test.size(); start += stride) {
    const auto& last = test[start + p - 1];
    for (std::size_t h = 0; h < q; ++h)
      for (std::size_t j = 0; j < last.size(); ++j) {
        const double e = test[start + p + h][j] - last[j];
        s += e * e;
        ++n;
      }
  }
  return std::sqrt(s / n);
}

namespace {

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + " ") {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      if (cur.size() > 1) out.push_back(cur);
      cur.clear();
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> rank_cases(const std::vector<Doc>& docs, const std::string& query) {
  std::vector<std::string> vocab;
  std::vector<std::vector<std::string>> toks;
  for (const auto& d : docs) {
    toks.push_back(words(d.text));
    for (const auto& w : toks.back())
      if (std::find(vocab.begin(), vocab.end(), w) == vocab.end()) vocab.push_back(w);
  }
  const double n = docs.size();
  std::vector<double> idf;
  for (const auto& w : vocab) {
    double df = 0;
    for (const auto& t : toks) df += std::find(t.begin(), t.end(), w) != t.end() ? 1 : 0;
    idf.push_back(std::log((1 + n) / (1 + df)) + 1);
  }
  auto dense = [&](const std::vector<std::string>& t) {
    std::vector<double> v(vocab.size(), 0.0);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      double tf = 0;
      for (const auto& w : t) tf += w == vocab[i] ? 1 : 0;
      v[i] = tf * idf[i];
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
      for (double& x : v) x /= norm;
    return v;
  };
  const auto qv = dense(words(query));
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t k = 0; k < docs.size(); ++k) {
    const auto dv = dense(toks[k]);
    double dot = 0;
    for (std::size_t i = 0; i < dv.size(); ++i) dot += dv[i] * qv[i];
    out.emplace_back(docs[k].id, std::min(1.0, std::max(0.0, dot)));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

std::vector<std::pair<std::string, double>> vote(const std::vector<Doc>& docs,
                                                 const std::vector<std::pair<std::string, double>>& ranked) {
  std::map<std::string, double> score;
  for (const auto& [id, sim] : ranked)
    for (const auto& d : docs)
      if (d.id == id) score[d.model] += sim;
  std::vector<std::pair<std::string, double>> out(score.begin(), score.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

}  // namespace oracle
