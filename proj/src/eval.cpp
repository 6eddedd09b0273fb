#include "lipemo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lipemo/errors.hpp"
#include "lipemo/frame_tensor.hpp"

namespace lipemo {

using json = nlohmann::json;

namespace {
constexpr int kScoreChunk = 64;
}

VideoAffect video_affect(const FrameStack& frames, const AffectScorer& scorer) {
  if (frames.count < 1) throw InvalidInput("video_affect: empty video");
  NoGradGuard guard;
  VideoAffect out;
  double sv = 0, sa = 0;
  for (int begin = 0; begin < frames.count; begin += kScoreChunk) {
    const int n = std::min(kScoreChunk, frames.count - begin);
    std::vector<bool> found;
    Tensor a = scorer.affect(to_tensor(frames.window(begin, n)), found);
    for (int i = 0; i < n; ++i) {
      if (!found[i]) {
        ++out.skipped;
        continue;
      }
      sv += a[i * 2];
      sa += a[i * 2 + 1];
      ++out.frame_count;
    }
  }
  if (out.frame_count == 0) throw NoFaceFound();
  out.v_bar = sv / out.frame_count;
  out.a_bar = sa / out.frame_count;
  return out;
}

double neutral_overshoot(double delta) { return 1.0 - std::abs(1.0 - delta); }

DeltaScores delta_affect(const VideoAffect& gen, const VideoAffect& src, const VideoAffect& dst,
                         bool dst_is_neutral, double threshold) {
  DeltaScores d;
  d.normalized_for_neutral = dst_is_neutral;
  const double dv = dst.v_bar - src.v_bar;
  const double da = dst.a_bar - src.a_bar;
  d.valence_degenerate = std::abs(dv) < threshold;
  d.arousal_degenerate = std::abs(da) < threshold;
  d.d_valence = d.valence_degenerate ? 0.0 : (gen.v_bar - src.v_bar) / dv;
  d.d_arousal = d.arousal_degenerate ? 0.0 : (gen.a_bar - src.a_bar) / da;
  if (dst_is_neutral) {
    if (!d.valence_degenerate) d.d_valence = neutral_overshoot(d.d_valence);
    if (!d.arousal_degenerate) d.d_arousal = neutral_overshoot(d.d_arousal);
  }
  return d;
}

double user_study_delta(double e_g, double e_s, double e_d, bool dst_is_neutral) {
  if (e_s == e_d) throw InvalidInput("user_study_delta: source and destination ratings are equal");
  const double d = (e_g - e_s) / (e_d - e_s);
  return dst_is_neutral ? neutral_overshoot(d) : d;
}

LseScores lse_metrics(const FrameStack& frames, const AudioFeatures& audio, int window,
                      const SyncScorer& scorer, int max_offset) {
  if (window < 1 || frames.count < window)
    throw InvalidInput("lse_metrics: video shorter than the window");
  if (audio.steps % frames.count != 0)
    throw InvalidInput("lse_metrics: audio steps are not a multiple of the frame count");
  const int spf = audio.steps / frames.count;
  const int nw = frames.count - window + 1;
  NoGradGuard guard;

  // Embed every window once: frames duplicated per window.
  FrameStack stacked(nw * window, frames.height, frames.width, frames.channels);
  AudioFeatures chunks(nw * window * spf, audio.bands);
  for (int w = 0; w < nw; ++w) {
    std::copy_n(frames.frame(w), window * frames.frame_size(), stacked.frame(w * window));
    std::copy_n(audio.data.data() + static_cast<std::size_t>(w) * spf * audio.bands,
                static_cast<std::size_t>(window) * spf * audio.bands,
                chunks.data.data() + static_cast<std::size_t>(w) * window * spf * audio.bands);
  }
  std::vector<bool> valid;
  auto [v, s] = scorer.embed(to_tensor(stacked), audio_to_tensor(chunks, nw), window, valid);
  const int dim = v.dim(1);
  auto unit = [dim](const Tensor& t, int row) {
    Eigen::VectorXd x(dim);
    for (int k = 0; k < dim; ++k) x(k) = t[static_cast<std::size_t>(row) * dim + k];
    const double n = x.norm();
    return n > 0 ? Eigen::VectorXd(x / n) : x;
  };
  std::vector<Eigen::VectorXd> vs(nw), ss(nw);
  for (int w = 0; w < nw; ++w) {
    vs[w] = unit(v, w);
    ss[w] = unit(s, w);
  }

  LseScores out;
  out.windows = nw;
  double sum_d = 0, sum_c = 0;
  for (int w = 0; w < nw; ++w) {
    if (!valid[w]) {
      ++out.invalid_windows;
      sum_d += std::sqrt(2.0);
      continue;  // all similarities 0, confidence 0
    }
    sum_d += (vs[w] - ss[w]).norm();
    std::vector<double> sims;
    double sim0 = 0;
    for (int o = -max_offset; o <= max_offset; ++o) {
      const int j = w + o;
      if (j < 0 || j >= nw) continue;
      const double sim = vs[w].dot(ss[j]);
      if (o == 0) sim0 = sim;
      sims.push_back(sim);
    }
    auto mid = sims.begin() + static_cast<long>(sims.size() / 2);
    std::nth_element(sims.begin(), mid, sims.end());
    double median = *mid;
    if (sims.size() % 2 == 0) {
      const double lower = *std::max_element(sims.begin(), mid);
      median = 0.5 * (median + lower);
    }
    sum_c += sim0 - median;
  }
  out.lse_d = sum_d / nw;
  out.lse_c = sum_c / nw;
  return out;
}

double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double reg) {
  if (a.cols() != b.cols()) throw InvalidInput("fid: feature dimensions differ");
  const Eigen::Index d = a.cols();
  if (a.rows() < d + 1 || b.rows() < d + 1)
    throw InvalidInput("fid: need at least dim + 1 samples per set");
  auto fit = [d, reg](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
    cov += reg * Eigen::MatrixXd::Identity(d, d);
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  fit(a, ma, ca);
  fit(b, mb, cb);
  // Tr((Ca Cb)^1/2) = Tr((Ca^1/2 Cb Ca^1/2)^1/2), the inner matrix is symmetric PSD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ca);
  if (ea.info() != Eigen::Success) throw NumericalError("fid: eigendecomposition failed");
  const Eigen::MatrixXd sa =
      ea.eigenvectors() * ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      ea.eigenvectors().transpose();
  const Eigen::MatrixXd inner = sa * cb * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()));
  if (ei.info() != Eigen::Success) throw NumericalError("fid: matrix square root did not converge");
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(value)) throw NumericalError("fid: non-finite result");
  return std::max(0.0, value);
}

Eigen::MatrixXd fid_features(const FrameStack& frames) {
  const int g = kFidGrid;
  if (frames.height < g || frames.width < g || frames.channels != 3)
    throw InvalidInput("fid_features: frames too small or not RGB");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(frames.count, g * g);
  for (int i = 0; i < frames.count; ++i)
    for (int y = 0; y < frames.height; ++y)
      for (int x = 0; x < frames.width; ++x) {
        const double grey = 0.299 * frames.at(i, y, x, 0) + 0.587 * frames.at(i, y, x, 1) +
                            0.114 * frames.at(i, y, x, 2);
        out(i, (y * g / frames.height) * g + x * g / frames.width) += grey;
      }
  out *= static_cast<double>(g * g) / (static_cast<double>(frames.height) * frames.width);
  return out;
}

VideoMetrics evaluate_video(const std::string& id, const EmotionLabel& source,
                            const EmotionLabel& destination, const FrameStack& generated,
                            const AudioFeatures& audio, const FrameStack& src_frames,
                            const FrameStack& dst_frames, int window, const ScorerSet& scorers) {
  VideoMetrics m;
  m.video = id;
  m.source = source;
  m.destination = destination;
  m.src = video_affect(src_frames, *scorers.affect);
  m.dst = video_affect(dst_frames, *scorers.affect);
  try {
    m.gen = video_affect(generated, *scorers.affect);
  } catch (const NoFaceFound&) {
    // An unreadable output counts as no change from the source.
    m.gen = m.src;
    m.gen.frame_count = 0;
    m.gen.skipped = generated.count;
  }
  m.delta = delta_affect(m.gen, m.src, m.dst, destination.name == Emotion::neutral);
  m.lse = lse_metrics(generated, audio, window, *scorers.sync);
  return m;
}

std::string pair_name(const EmotionLabel& src, const EmotionLabel& dst) {
  return to_string(src.name) + "->" + to_string(dst.name);
}

std::vector<std::string> all_pair_names() {
  std::vector<std::string> out;
  for (Emotion s : {Emotion::sad, Emotion::neutral, Emotion::happy})
    for (Emotion d : {Emotion::sad, Emotion::neutral, Emotion::happy})
      if (s != d) out.push_back(to_string(s) + "->" + to_string(d));
  return out;
}

namespace {

void accumulate(PairRow& row, const VideoMetrics& m) {
  ++row.videos;
  if (m.delta.valence_degenerate) {
    ++row.valence_degenerate;
  } else {
    row.d_valence += m.delta.d_valence;
    ++row.valence_count;
  }
  if (m.delta.arousal_degenerate) {
    ++row.arousal_degenerate;
  } else {
    row.d_arousal += m.delta.d_arousal;
    ++row.arousal_count;
  }
  row.lse_d += m.lse.lse_d;
  row.lse_c += m.lse.lse_c;
  row.baseline_valence += m.dst.v_bar - m.src.v_bar;
  row.baseline_arousal += m.dst.a_bar - m.src.a_bar;
}

void finish(PairRow& row) {
  if (row.videos == 0) {
    row.missing = true;
    return;
  }
  if (row.valence_count > 0) row.d_valence /= row.valence_count;
  if (row.arousal_count > 0) row.d_arousal /= row.arousal_count;
  row.lse_d /= row.videos;
  row.lse_c /= row.videos;
  row.baseline_valence /= row.videos;
  row.baseline_arousal /= row.videos;
}

}  // namespace

MetricReport aggregate_report(const std::vector<VideoMetrics>& videos,
                              const std::vector<std::string>& pair_order,
                              const std::vector<PairFid>& fids, std::optional<double> micro_fid) {
  MetricReport r;
  r.micro.pair = "micro-average";
  r.pair_mean.pair = "pair-mean";
  for (const auto& name : pair_order) {
    PairRow row;
    row.pair = name;
    for (const auto& m : videos)
      if (pair_name(m.source, m.destination) == name) {
        accumulate(row, m);
        accumulate(r.micro, m);
      }
    finish(row);
    for (const auto& f : fids)
      if (f.pair == name) {
        row.fid = f.value;
        row.has_fid = true;
      }
    r.pairs.push_back(row);
  }
  finish(r.micro);
  if (micro_fid) {
    r.micro.fid = *micro_fid;
    r.micro.has_fid = true;
  }
  int present = 0, with_v = 0, with_a = 0, with_fid = 0;
  PairRow& pm = r.pair_mean;
  for (const auto& row : r.pairs) {
    if (row.missing) continue;
    ++present;
    pm.videos += row.videos;
    pm.valence_degenerate += row.valence_degenerate;
    pm.arousal_degenerate += row.arousal_degenerate;
    if (row.valence_count > 0) {
      pm.d_valence += row.d_valence;
      pm.valence_count += row.valence_count;
      ++with_v;
    }
    if (row.arousal_count > 0) {
      pm.d_arousal += row.d_arousal;
      pm.arousal_count += row.arousal_count;
      ++with_a;
    }
    pm.lse_d += row.lse_d;
    pm.lse_c += row.lse_c;
    pm.baseline_valence += row.baseline_valence;
    pm.baseline_arousal += row.baseline_arousal;
    if (row.has_fid) {
      pm.fid += row.fid;
      ++with_fid;
    }
  }
  if (present == 0) {
    pm.missing = true;
  } else {
    if (with_v) pm.d_valence /= with_v;
    if (with_a) pm.d_arousal /= with_a;
    pm.lse_d /= present;
    pm.lse_c /= present;
    pm.baseline_valence /= present;
    pm.baseline_arousal /= present;
    if (with_fid) {
      pm.fid /= with_fid;
      pm.has_fid = true;
    }
  }
  return r;
}

namespace {

json row_json(const PairRow& row) {
  json j{{"pair", row.pair}, {"missing", row.missing}, {"videos", row.videos}};
  if (row.missing) return j;
  j["delta_valence"] = row.valence_count > 0 ? json(row.d_valence) : json(nullptr);
  j["delta_arousal"] = row.arousal_count > 0 ? json(row.d_arousal) : json(nullptr);
  j["valence_degenerate"] = row.valence_degenerate;
  j["arousal_degenerate"] = row.arousal_degenerate;
  j["lse_d"] = row.lse_d;
  j["lse_c"] = row.lse_c;
  j["fid"] = row.has_fid ? json(row.fid) : json(nullptr);
  j["baseline_valence"] = row.baseline_valence;
  j["baseline_arousal"] = row.baseline_arousal;
  return j;
}

std::string fmt(double v, bool present) {
  if (!present) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string report_json(const std::vector<MetricReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json rows = json::array();
    for (const auto& row : r.pairs) rows.push_back(row_json(row));
    json j{{"label", r.label},
           {"pairs", rows},
           {"micro_average", row_json(r.micro)},
           {"pair_mean", row_json(r.pair_mean)}};
    j["gt_fid_baseline"] = r.gt_fid_baseline ? json(*r.gt_fid_baseline) : json(nullptr);
    out.push_back(j);
  }
  return out.dump(2);
}

std::vector<MetricReport> report_from_json(const std::string& text) {
  std::vector<MetricReport> out;
  try {
    const json all = json::parse(text);
    auto row = [](const json& j) {
      PairRow r;
      r.pair = j.at("pair");
      r.missing = j.at("missing");
      r.videos = j.at("videos");
      if (r.missing) return r;
      auto opt = [](const json& v, double& dst) {
        if (v.is_null()) return 0;
        dst = v.get<double>();
        return 1;
      };
      r.valence_count = opt(j.at("delta_valence"), r.d_valence);
      r.arousal_count = opt(j.at("delta_arousal"), r.d_arousal);
      r.has_fid = opt(j.at("fid"), r.fid) == 1;
      r.valence_degenerate = j.at("valence_degenerate");
      r.arousal_degenerate = j.at("arousal_degenerate");
      r.lse_d = j.at("lse_d");
      r.lse_c = j.at("lse_c");
      r.baseline_valence = j.at("baseline_valence");
      r.baseline_arousal = j.at("baseline_arousal");
      return r;
    };
    for (const json& j : all) {
      MetricReport r;
      r.label = j.at("label");
      for (const json& p : j.at("pairs")) r.pairs.push_back(row(p));
      r.micro = row(j.at("micro_average"));
      r.pair_mean = row(j.at("pair_mean"));
      if (!j.at("gt_fid_baseline").is_null()) r.gt_fid_baseline = j["gt_fid_baseline"].get<double>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed metric report: ") + e.what());
  }
  return out;
}

std::string report_table(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  char line[256];
  for (const auto& r : reports) {
    os << "== " << r.label << " ==\n";
    std::snprintf(line, sizeof line, "%-16s %6s %9s %9s %9s %9s %9s %9s %9s\n", "pair", "videos",
                  "LSE-D", "LSE-C", "FID", "dValence", "dArousal", "vd-vs", "ad-as");
    os << line;
    auto print = [&](const PairRow& row) {
      if (row.missing) {
        std::snprintf(line, sizeof line, "%-16s %6s\n", row.pair.c_str(), "missing");
      } else {
        std::snprintf(line, sizeof line, "%-16s %6d %9s %9s %9s %9s %9s %9s %9s\n",
                      row.pair.c_str(), row.videos, fmt(row.lse_d, true).c_str(),
                      fmt(row.lse_c, true).c_str(), fmt(row.fid, row.has_fid).c_str(),
                      fmt(row.d_valence, row.valence_count > 0).c_str(),
                      fmt(row.d_arousal, row.arousal_count > 0).c_str(),
                      fmt(row.baseline_valence, true).c_str(),
                      fmt(row.baseline_arousal, true).c_str());
      }
      os << line;
    };
    for (const auto& row : r.pairs) print(row);
    print(r.micro);
    print(r.pair_mean);
    if (r.gt_fid_baseline) os << "ground-truth FID baseline: " << fmt(*r.gt_fid_baseline, true) << "\n";
    int dv = 0, da = 0;
    for (const auto& row : r.pairs) {
      dv += row.valence_degenerate;
      da += row.arousal_degenerate;
    }
    if (dv + da > 0)
      os << "excluded as degenerate: " << dv << " valence, " << da << " arousal\n";
    os << "\n";
  }
  return os.str();
}

std::string report_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "label,pair,videos,lse_d,lse_c,fid,delta_valence,delta_arousal,baseline_valence,"
        "baseline_arousal,valence_degenerate,arousal_degenerate\n";
  auto print = [&](const std::string& label, const PairRow& row) {
    os << label << ',' << row.pair << ',' << row.videos << ',';
    if (row.missing) {
      os << ",,,,,,,,\n";
      return;
    }
    auto cell = [](double v, bool present) { return present ? fmt(v, true) : std::string(); };
    os << cell(row.lse_d, true) << ',' << cell(row.lse_c, true) << ','
       << cell(row.fid, row.has_fid) << ',' << cell(row.d_valence, row.valence_count > 0) << ','
       << cell(row.d_arousal, row.arousal_count > 0) << ',' << cell(row.baseline_valence, true)
       << ',' << cell(row.baseline_arousal, true) << ',' << row.valence_degenerate << ','
       << row.arousal_degenerate << '\n';
  };
  for (const auto& r : reports) {
    for (const auto& row : r.pairs) print(r.label, row);
    print(r.label, r.micro);
    print(r.label, r.pair_mean);
  }
  return os.str();
}

}  // namespace lipemo
