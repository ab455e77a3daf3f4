#include "psvae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "psvae/forward.hpp"

namespace psvae {

namespace {
constexpr int kEvalBatch = 128;
}

double MIMatrix::sum_private_timbre() const {
  return std::accumulate(timbre_bits.begin(), timbre_bits.begin() + d_p, 0.0);
}
double MIMatrix::sum_shared_timbre() const {
  return std::accumulate(timbre_bits.begin() + d_p, timbre_bits.end(), 0.0);
}
double MIMatrix::sum_private_freq() const {
  return std::accumulate(freq_bits.begin(), freq_bits.begin() + d_p, 0.0);
}
double MIMatrix::sum_shared_freq() const {
  return std::accumulate(freq_bits.begin() + d_p, freq_bits.end(), 0.0);
}

LatentTable extract_latents(const ParameterStore<float>& params, const LatentConfig& lc,
                            const Corpus& corpus) {
  const auto& man = corpus.manifest;
  const std::vector<std::pair<int, int>> test_pairs(man.pair_index.begin() + man.n_train_pairs,
                                                    man.pair_index.end());
  LatentTable table;
  table.d_p = lc.d_p;
  table.d_s = lc.d_s;

  // Each sample reads its private code from its own view and the shared code
  // from the first pair containing it.
  std::map<int, std::pair<int, int>> first_pair;  // sample -> (pair idx, side)
  for (size_t p = 0; p < test_pairs.size(); ++p) {
    first_pair.emplace(test_pairs[p].first, std::make_pair(static_cast<int>(p), 0));
    first_pair.emplace(test_pairs[p].second, std::make_pair(static_cast<int>(p), 1));
  }

  const int np = static_cast<int>(test_pairs.size());
  std::vector<std::vector<float>> pair_zp1(static_cast<size_t>(np)), pair_zp2(static_cast<size_t>(np)),
      pair_zs(static_cast<size_t>(np));
  std::vector<int> order(static_cast<size_t>(np));
  for (int i = 0; i < np; ++i) order[static_cast<size_t>(i)] = i;

  for (int begin = 0; begin < np; begin += kEvalBatch) {
    const int count = std::min(kEvalBatch, np - begin);
    Tensor<float> x1, x2;
    fill_pair_batch(corpus, test_pairs, order, begin, count, x1, x2);
    Tape<float> tape;
    TapeParams<float> staged = stage_params(tape, params, /*needs_grad=*/false);
    EncodeOut<float> e1 = encode(staged, make_const(tape, std::move(x1)), lc);
    EncodeOut<float> e2 = encode(staged, make_const(tape, std::move(x2)), lc);
    GaussVar<float> fused = poe_fuse(tape, {e1.shared_expert, e2.shared_expert}, true);

    const Tensor<float>& m1 = e1.priv.mean.val();
    const Tensor<float>& m2 = e2.priv.mean.val();
    const Tensor<float>& ms = fused.mean.val();
    for (int b = 0; b < count; ++b) {
      const int p = begin + b;
      pair_zp1[static_cast<size_t>(p)].assign(m1.ptr() + static_cast<int64_t>(b) * lc.d_p,
                                              m1.ptr() + static_cast<int64_t>(b + 1) * lc.d_p);
      pair_zp2[static_cast<size_t>(p)].assign(m2.ptr() + static_cast<int64_t>(b) * lc.d_p,
                                              m2.ptr() + static_cast<int64_t>(b + 1) * lc.d_p);
      pair_zs[static_cast<size_t>(p)].assign(ms.ptr() + static_cast<int64_t>(b) * lc.d_s,
                                             ms.ptr() + static_cast<int64_t>(b + 1) * lc.d_s);
    }
  }

  for (int i = man.n_train_samples; i < man.n_samples; ++i) {
    auto it = first_pair.find(i);
    if (it == first_pair.end()) {
      ++table.skipped_orphans;
      continue;
    }
    const int p = it->second.first;
    LatentRow row;
    row.zp = it->second.second == 0 ? pair_zp1[static_cast<size_t>(p)] : pair_zp2[static_cast<size_t>(p)];
    row.zs = pair_zs[static_cast<size_t>(p)];
    row.label = man.factors[static_cast<size_t>(i)];
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

// Equal-frequency binning by rank; ties follow the stable sort order.
std::vector<int> equal_freq_bins(const std::vector<float>& values, int n_bins) {
  const int n = static_cast<int>(values.size());
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return values[static_cast<size_t>(a)] < values[static_cast<size_t>(b)];
  });
  std::vector<int> bins(static_cast<size_t>(n));
  for (int pos = 0; pos < n; ++pos) {
    bins[static_cast<size_t>(idx[static_cast<size_t>(pos)])] =
        static_cast<int>((static_cast<int64_t>(pos) * n_bins) / n);
  }
  return bins;
}

double discrete_mi_bits(const std::vector<int>& a, int ka, const std::vector<int>& b, int kb) {
  const int n = static_cast<int>(a.size());
  std::vector<double> joint(static_cast<size_t>(ka) * kb, 0.0);
  std::vector<double> pa(static_cast<size_t>(ka), 0.0), pb(static_cast<size_t>(kb), 0.0);
  for (int i = 0; i < n; ++i) {
    joint[static_cast<size_t>(a[static_cast<size_t>(i)]) * kb + b[static_cast<size_t>(i)]] += 1.0;
    pa[static_cast<size_t>(a[static_cast<size_t>(i)])] += 1.0;
    pb[static_cast<size_t>(b[static_cast<size_t>(i)])] += 1.0;
  }
  double mi = 0.0;
  for (int x = 0; x < ka; ++x) {
    for (int y = 0; y < kb; ++y) {
      const double pxy = joint[static_cast<size_t>(x) * kb + y] / n;
      if (pxy <= 0.0) continue;
      mi += pxy * std::log2(pxy * n * n / (pa[static_cast<size_t>(x)] * pb[static_cast<size_t>(y)]));
    }
  }
  return std::max(0.0, mi);
}

}  // namespace

MIMatrix mi_matrix(const LatentTable& table, int n_bins) {
  if (table.rows.empty()) throw std::invalid_argument("mi_matrix: empty latent table");
  if (n_bins < 2) throw std::invalid_argument("mi_matrix: n_bins must be >= 2");
  const int n = static_cast<int>(table.rows.size());
  const int dims = table.d_p + table.d_s;

  std::vector<int> timbre(static_cast<size_t>(n)), freq(static_cast<size_t>(n));
  int max_freq_bin = 0;
  for (int i = 0; i < n; ++i) {
    timbre[static_cast<size_t>(i)] = table.rows[static_cast<size_t>(i)].label.timbre_class;
    freq[static_cast<size_t>(i)] = table.rows[static_cast<size_t>(i)].label.frequency_bin;
    max_freq_bin = std::max(max_freq_bin, freq[static_cast<size_t>(i)]);
  }

  MIMatrix out;
  out.d_p = table.d_p;
  out.d_s = table.d_s;
  out.timbre_bits.resize(static_cast<size_t>(dims));
  out.freq_bits.resize(static_cast<size_t>(dims));
  for (int d = 0; d < dims; ++d) {
    std::vector<float> values(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& row = table.rows[static_cast<size_t>(i)];
      values[static_cast<size_t>(i)] = d < table.d_p ? row.zp[static_cast<size_t>(d)]
                                                     : row.zs[static_cast<size_t>(d - table.d_p)];
    }
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (!(*mx > *mn)) {
      ++out.constant_dims;  // MI of a constant is 0 by definition
      out.timbre_bits[static_cast<size_t>(d)] = 0.0;
      out.freq_bits[static_cast<size_t>(d)] = 0.0;
      continue;
    }
    const std::vector<int> bins = equal_freq_bins(values, n_bins);
    out.timbre_bits[static_cast<size_t>(d)] = discrete_mi_bits(bins, n_bins, timbre, kNumTimbres);
    out.freq_bits[static_cast<size_t>(d)] = discrete_mi_bits(bins, n_bins, freq, max_freq_bin + 1);
  }
  return out;
}

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ProbeData {
  MatRM x_train, x_test;
  std::vector<int> y_train, y_test;
  int n_classes = 0;
};

ProbeData split_probe_data(const LatentTable& table, Subspace subspace, ProbeTask task,
                           uint64_t seed, double train_fraction) {
  const int n = static_cast<int>(table.rows.size());
  if (n < 5) throw std::invalid_argument("probe: latent table too small");
  const int n_classes = task == ProbeTask::kTimbre ? kNumTimbres : 21;

  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::stream(seed, 0x70726f6265);
  rng.shuffle(idx);
  const int n_train = static_cast<int>(std::floor(n * train_fraction));
  if (n_train < 1 || n_train >= n) throw std::invalid_argument("probe: degenerate split");

  const int f = (subspace == Subspace::kPrivate ? table.d_p
                 : subspace == Subspace::kShared ? table.d_s
                                                 : table.d_p + table.d_s);
  ProbeData out;
  out.n_classes = n_classes;
  out.x_train.resize(n_train, f);
  out.x_test.resize(n - n_train, f);
  out.y_train.resize(static_cast<size_t>(n_train));
  out.y_test.resize(static_cast<size_t>(n - n_train));
  for (int i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    const int label = task == ProbeTask::kTimbre ? row.label.timbre_class : row.label.frequency_bin;
    Eigen::RowVectorXd feat(f);
    int c = 0;
    if (subspace != Subspace::kShared)
      for (int d = 0; d < table.d_p; ++d) feat(c++) = row.zp[static_cast<size_t>(d)];
    if (subspace != Subspace::kPrivate)
      for (int d = 0; d < table.d_s; ++d) feat(c++) = row.zs[static_cast<size_t>(d)];
    if (i < n_train) {
      out.x_train.row(i) = feat;
      out.y_train[static_cast<size_t>(i)] = label;
    } else {
      out.x_test.row(i - n_train) = feat;
      out.y_test[static_cast<size_t>(i - n_train)] = label;
    }
  }

  std::vector<int> counts(static_cast<size_t>(n_classes), 0);
  for (int y : out.y_train) ++counts[static_cast<size_t>(y)];
  for (int c2 = 0; c2 < n_classes; ++c2) {
    if (counts[static_cast<size_t>(c2)] == 0) {
      throw std::runtime_error(std::string("probe: class absent from probe-train split: ") +
                               (task == ProbeTask::kTimbre ? "timbre " : "frequency bin ") +
                               std::to_string(c2));
    }
  }
  return out;
}

}  // namespace

double probe(const LatentTable& table, Subspace subspace, ProbeTask task, uint64_t seed,
             const ProbeConfig& cfg) {
  ProbeData data = split_probe_data(table, subspace, task, seed, cfg.train_fraction);
  const int n = static_cast<int>(data.x_train.rows());
  const int f = static_cast<int>(data.x_train.cols());
  const int c = data.n_classes;

  // Multinomial logistic regression, zero init, full-batch Adam.
  MatRM w = MatRM::Zero(c, f);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(c);
  MatRM mw = MatRM::Zero(c, f), vw = MatRM::Zero(c, f);
  Eigen::RowVectorXd mb = Eigen::RowVectorXd::Zero(c), vb = Eigen::RowVectorXd::Zero(c);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  MatRM logits(n, c), probs(n, c);
  for (int step = 1; step <= cfg.steps; ++step) {
    logits.noalias() = data.x_train * w.transpose();
    logits.rowwise() += b;
    for (int i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      probs.row(i) = (logits.row(i).array() - mx).exp();
      probs.row(i) /= probs.row(i).sum();
    }
    for (int i = 0; i < n; ++i) probs(i, data.y_train[static_cast<size_t>(i)]) -= 1.0;
    probs /= static_cast<double>(n);
    const MatRM gw = probs.transpose() * data.x_train;
    const Eigen::RowVectorXd gb = probs.colwise().sum();

    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    mw = beta1 * mw + (1.0 - beta1) * gw;
    vw = beta2 * vw + (1.0 - beta2) * gw.cwiseProduct(gw);
    mb = beta1 * mb + (1.0 - beta1) * gb;
    vb = beta2 * vb + (1.0 - beta2) * gb.cwiseProduct(gb);
    w -= cfg.lr * (mw / bc1).cwiseQuotient(((vw / bc2).cwiseSqrt().array() + eps).matrix());
    b -= cfg.lr * (mb / bc1).cwiseQuotient(((vb / bc2).cwiseSqrt().array() + eps).matrix());
  }

  const int nt = static_cast<int>(data.x_test.rows());
  MatRM test_logits = data.x_test * w.transpose();
  test_logits.rowwise() += b;
  int correct = 0;
  for (int i = 0; i < nt; ++i) {
    int arg = 0;
    test_logits.row(i).maxCoeff(&arg);
    if (arg == data.y_test[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / nt;
}

ProbeReport full_probe_report(const LatentTable& table, uint64_t seed, const ProbeConfig& cfg) {
  ProbeReport rep;
  const Subspace subs[3] = {Subspace::kPrivate, Subspace::kShared, Subspace::kBoth};
  const ProbeTask tasks[2] = {ProbeTask::kTimbre, ProbeTask::kFrequency};
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 2; ++t) rep.acc[s][t] = probe(table, subs[s], tasks[t], seed, cfg);
  return rep;
}

void emit_reports(const MIMatrix& mi, const ProbeReport& probes, const std::string& out_dir) {
  const int dims = mi.d_p + mi.d_s;
  if (dims <= 0 || mi.timbre_bits.empty()) {
    throw std::invalid_argument("emit_reports: empty MI matrix");
  }
  std::filesystem::create_directories(out_dir);

  {
    std::ofstream f(out_dir + "/mi_matrix.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("emit_reports: cannot write mi_matrix.csv");
    f << "dim,subspace,timbre_bits,frequency_bits\n";
    char buf[96];
    for (int d = 0; d < dims; ++d) {
      const bool priv = d < mi.d_p;
      std::snprintf(buf, sizeof(buf), "%s%d,%s,%.10g,%.10g", priv ? "p" : "s",
                    priv ? d : d - mi.d_p, priv ? "private" : "shared",
                    mi.timbre_bits[static_cast<size_t>(d)], mi.freq_bits[static_cast<size_t>(d)]);
      f << buf << "\n";
    }
  }

  {
    std::ofstream f(out_dir + "/probe_report.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("emit_reports: cannot write probe_report.csv");
    f << "subspace,timbre,frequency\n";
    const char* names[3] = {"private", "shared", "both"};
    char buf[96];
    for (int s = 0; s < 3; ++s) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g", names[s], probes.acc[s][0], probes.acc[s][1]);
      f << buf << "\n";
    }
  }

  {
    double peak = 0.0;
    for (int d = 0; d < dims; ++d) {
      peak = std::max({peak, mi.timbre_bits[static_cast<size_t>(d)], mi.freq_bits[static_cast<size_t>(d)]});
    }
    std::ofstream f(out_dir + "/mi_heatmap.pgm", std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("emit_reports: cannot write mi_heatmap.pgm");
    f << "P5\n2 " << dims << "\n255\n";
    for (int d = 0; d < dims; ++d) {
      const auto px = [&](double v) {
        return static_cast<unsigned char>(peak > 0.0 ? std::lround(255.0 * v / peak) : 0);
      };
      const unsigned char row[2] = {px(mi.timbre_bits[static_cast<size_t>(d)]),
                                    px(mi.freq_bits[static_cast<size_t>(d)])};
      f.write(reinterpret_cast<const char*>(row), 2);
    }
    std::ofstream leg(out_dir + "/mi_heatmap_legend.txt", std::ios::trunc);
    leg << "rows: latent dims p0..p" << mi.d_p - 1 << " then s0..s" << mi.d_s - 1 << " (top to bottom)\n"
        << "cols: timbre, frequency\n"
        << "scale: 255 = " << peak << " bits\n";
  }
}

const char* subspace_name(Subspace s) {
  switch (s) {
    case Subspace::kPrivate: return "private";
    case Subspace::kShared: return "shared";
    default: return "both";
  }
}

const char* task_name(ProbeTask t) { return t == ProbeTask::kTimbre ? "timbre" : "frequency"; }

}  // namespace psvae
