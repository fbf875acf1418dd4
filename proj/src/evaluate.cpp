#include "orgseg/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "orgseg/error.hpp"
#include "orgseg/fsutil.hpp"
#include "orgseg/plot.hpp"
#include "orgseg/raster_io.hpp"
#include "orgseg/train.hpp"

namespace orgseg {
namespace fs = std::filesystem;
using nlohmann::json;

Mask2D binarize(const Image2D& pred, double threshold) {
  Mask2D out(pred.width(), pred.height());
  const auto src = pred.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]) >= threshold ? 1 : 0;
  return out;
}

ConfusionCounts confusion(const Mask2D& y, const Mask2D& y_hat) {
  if (!y.same_shape(y_hat)) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(y.width()) + "x" + std::to_string(y.height()) + " vs " +
                                                  std::to_string(y_hat.width()) + "x" + std::to_string(y_hat.height()));
  }
  // index = 2*truth + prediction
  std::uint64_t bins[4] = {0, 0, 0, 0};
  const auto a = y.pixels();
  const auto b = y_hat.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) ++bins[2 * (a[i] != 0) + (b[i] != 0)];
  return {bins[3], bins[1], bins[2], bins[0]};
}

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const auto n = static_cast<double>(c.total());
  m.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / n : 1.0;
  if (c.tp + c.fp + c.fn == 0) {
    m.precision = m.recall = m.f1 = m.jaccard = 1.0;
    return m;
  }
  const auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.jaccard = ratio(c.tp, c.tp + c.fp + c.fn);
  return m;
}

double metric_value(const Metrics& m, const std::string& name) {
  if (name == "f1") return m.f1;
  if (name == "accuracy") return m.accuracy;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "jaccard") return m.jaccard;
  throw Error(ErrorKind::InvalidSpec, "unknown metric " + name);
}

Metrics average(const std::vector<ConfusionCounts>& per_image, Averaging mode) {
  if (per_image.empty()) throw Error(ErrorKind::EmptyDataset, "no images to average");
  if (mode == Averaging::micro) {
    ConfusionCounts pooled;
    for (const auto& c : per_image) pooled += c;
    return metrics(pooled);
  }
  Metrics sum;
  for (const auto& c : per_image) {
    const Metrics m = metrics(c);
    sum.accuracy += m.accuracy;
    sum.precision += m.precision;
    sum.recall += m.recall;
    sum.f1 += m.f1;
    sum.jaccard += m.jaccard;
  }
  const double n = static_cast<double>(per_image.size());
  return {sum.accuracy / n, sum.precision / n, sum.recall / n, sum.f1 / n, sum.jaccard / n};
}

json MetricsRecord::to_json() const {
  json counts = json::array();
  for (const auto& c : per_image) counts.push_back({c.tp, c.fp, c.fn, c.tn});
  json j{{"fold", fold ? json(*fold) : json(nullptr)}, {"per_image", counts}};
  for (const auto& name : metric_names()) j[name] = metric_value(metrics, name);
  return j;
}

MetricsRecord MetricsRecord::from_json(const json& j) {
  MetricsRecord r;
  try {
    if (!j.at("fold").is_null()) r.fold = j.at("fold").get<int>();
    for (const auto& c : j.at("per_image")) {
      r.per_image.push_back({c.at(0).get<std::uint64_t>(), c.at(1).get<std::uint64_t>(), c.at(2).get<std::uint64_t>(),
                             c.at(3).get<std::uint64_t>()});
    }
    r.metrics = {j.at("accuracy").get<double>(), j.at("precision").get<double>(), j.at("recall").get<double>(),
                 j.at("f1").get<double>(), j.at("jaccard").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("metrics record: ") + e.what());
  }
  return r;
}

MetricsRecord evaluate_masks(const std::vector<Mask2D>& truth, const std::vector<Mask2D>& pred,
                             std::optional<int> fold, Averaging mode) {
  if (truth.size() != pred.size()) throw Error(ErrorKind::DimensionMismatch, "mask list lengths differ");
  MetricsRecord r;
  r.fold = fold;
  for (std::size_t i = 0; i < truth.size(); ++i) r.per_image.push_back(confusion(truth[i], pred[i]));
  r.metrics = average(r.per_image, mode);
  return r;
}

MetricsRecord evaluate_model(UNet& model, const CropSource& source, const std::vector<std::string>& ids,
                             double threshold, std::optional<int> fold, Averaging mode) {
  const auto preds = predict(model, source, ids);
  std::vector<Mask2D> truth, hat;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    truth.push_back(fit_to(source.load(ids[i]), model.spec().input_size).mask);
    hat.push_back(binarize(preds[i], threshold));
  }
  return evaluate_masks(truth, hat, fold, mode);
}

Summary summarize(const std::vector<double>& scores) {
  Summary s;
  s.n = scores.size();
  if (scores.empty()) {
    s.best = s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.best = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = sum / static_cast<double>(scores.size());
  if (scores.size() > 1) {
    double ss = 0.0;
    for (double v : scores) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  }
  return s;
}

void aggregate(ReportRow& row, const std::vector<MetricsRecord>& folds) {
  std::set<int> present;
  for (const auto& r : folds)
    if (r.fold) present.insert(*r.fold);
  row.missing_folds.clear();
  for (int f = 0; f < row.folds_expected; ++f)
    if (!present.count(f)) row.missing_folds.push_back(f);
  for (const auto& name : metric_names()) {
    std::vector<double> values;
    for (const auto& r : folds) values.push_back(metric_value(r.metrics, name));
    row.scores[name] = summarize(values);
  }
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

json summary_json(const Summary& s) {
  const auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return json{{"best", num(s.best)}, {"mean", num(s.mean)}, {"std", num(s.std)}, {"folds", s.n}};
}

}  // namespace

std::string table_csv(const std::vector<ReportRow>& rows) {
  std::string out = "config_id,framework,encoder,freeze_encoder,loss,augmentation,pretext_fraction,budget";
  for (const auto& name : metric_names()) out += ",best_" + name + ",mean_" + name + ",std_" + name;
  out += ",folds,missing_folds\n";
  for (const auto& r : rows) {
    out += csv_field(r.config_id) + "," + r.framework + "," + r.encoder + "," + (r.freeze_encoder ? "true" : "false") +
           "," + r.loss + "," + csv_field(r.augmentation) + "," +
           (r.pretext_fraction ? fmt(*r.pretext_fraction) : "") + "," +
           (r.budget ? std::to_string(*r.budget) : "");
    for (const auto& name : metric_names()) {
      auto it = r.scores.find(name);
      const Summary s = it == r.scores.end() ? summarize({}) : it->second;
      out += "," + fmt(s.best) + "," + fmt(s.mean) + "," + fmt(s.std);
    }
    const auto n = r.scores.count("f1") ? r.scores.at("f1").n : 0;
    std::string missing;
    for (std::size_t i = 0; i < r.missing_folds.size(); ++i) missing += (i ? ";" : "") + std::to_string(r.missing_folds[i]);
    out += "," + std::to_string(n) + "," + missing + "\n";
  }
  return out;
}

json table_json(const std::vector<ReportRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json scores = json::object();
    for (const auto& [name, s] : r.scores) scores[name] = summary_json(s);
    out.push_back(json{{"config_id", r.config_id},
                       {"framework", r.framework},
                       {"encoder", r.encoder},
                       {"freeze_encoder", r.freeze_encoder},
                       {"loss", r.loss},
                       {"augmentation", r.augmentation},
                       {"pretext_fraction", r.pretext_fraction ? json(*r.pretext_fraction) : json(nullptr)},
                       {"budget", r.budget ? json(*r.budget) : json(nullptr)},
                       {"folds_expected", r.folds_expected},
                       {"missing_folds", r.missing_folds},
                       {"scores", scores}});
  }
  return out;
}

json curve_json(const Curve& curve) {
  json series = json::array();
  for (const auto& s : curve.series) {
    json summaries = json::array();
    for (const auto& sm : s.summary) summaries.push_back(summary_json(sm));
    series.push_back(json{{"name", s.name}, {"x", s.x}, {"f1_per_fold", s.per_fold}, {"f1", summaries}});
  }
  json baselines = json::array();
  for (const auto& b : curve.baselines) baselines.push_back(json{{"label", b.label}, {"f1", b.value}});
  return json{{"name", curve.name}, {"x_label", curve.x_label}, {"series", series}, {"baselines", baselines}};
}

namespace {

void render_curve(const Curve& curve, const fs::path& path) {
  using namespace plot;
  constexpr int W = 760, H = 480, left = 70, right = 210, top = 40, bottom = 60;
  Canvas cv(W, H);
  const int pw = W - left - right, ph = H - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& s : curve.series)
    for (double x : s.x) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax == xmin) xmin -= 1, xmax += 1;
  const double pad = 0.04 * (xmax - xmin);
  xmin -= pad, xmax += pad;
  const auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * pw)); };
  const auto py = [&](double y) {
    return top + ph - static_cast<int>(std::lround(std::clamp(y, 0.0, 1.0) * ph));
  };

  for (int t = 0; t <= 5; ++t) {
    const double y = t / 5.0;
    cv.line(left, py(y), left + pw, py(y), kGrey);
    char buf[8];
    std::snprintf(buf, sizeof buf, "%.1f", y);
    cv.text(left - 8 - Canvas::text_width(buf), py(y) - 3, buf, kBlack);
  }
  std::set<double> ticks;
  for (const auto& s : curve.series) ticks.insert(s.x.begin(), s.x.end());
  const std::size_t every = std::max<std::size_t>(1, (ticks.size() + 9) / 10);
  std::size_t k = 0;
  for (double x : ticks) {
    if (k++ % every) continue;
    cv.line(px(x), top + ph, px(x), top + ph + 4, kBlack);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%g", x);
    cv.text(px(x) - Canvas::text_width(buf) / 2, top + ph + 8, buf, kBlack);
  }
  cv.line(left, top, left, top + ph, kBlack);
  cv.line(left, top + ph, left + pw, top + ph, kBlack);
  cv.text(left, 12, curve.name, kBlack, 2);
  cv.text(left + pw / 2 - Canvas::text_width(curve.x_label) / 2, H - 24, curve.x_label, kBlack);
  cv.text(8, top - 14, "F1", kBlack);

  int legend_y = top;
  for (std::size_t i = 0; i < curve.series.size(); ++i) {
    const auto& s = curve.series[i];
    const Rgb c = palette(i);
    for (std::size_t p = 0; p < s.x.size() && p < s.summary.size(); ++p) {
      const Summary& sm = s.summary[p];
      if (std::isnan(sm.mean)) continue;
      cv.line(px(s.x[p]), py(sm.mean - sm.std), px(s.x[p]), py(sm.mean + sm.std), c);
      cv.fill_rect(px(s.x[p]) - 2, py(sm.mean) - 2, px(s.x[p]) + 2, py(sm.mean) + 2, c);
      if (p + 1 < s.x.size() && p + 1 < s.summary.size() && !std::isnan(s.summary[p + 1].mean)) {
        cv.line(px(s.x[p]), py(sm.mean), px(s.x[p + 1]), py(s.summary[p + 1].mean), c, 2);
      }
    }
    cv.fill_rect(left + pw + 14, legend_y, left + pw + 26, legend_y + 6, c);
    cv.text(left + pw + 32, legend_y, s.name, kBlack);
    legend_y += 14;
  }
  for (std::size_t i = 0; i < curve.baselines.size(); ++i) {
    const auto& b = curve.baselines[i];
    const Rgb c = i == 0 ? kBlue : palette(curve.series.size() + i);
    cv.dotted_line(left, py(b.value), left + pw, py(b.value), c);
    cv.dotted_line(left + pw + 14, legend_y + 3, left + pw + 26, legend_y + 3, c, 2, 2);
    cv.text(left + pw + 32, legend_y, b.label, kBlack);
    legend_y += 14;
  }
  cv.write_png(path);
}

}  // namespace

void write_overlay_png(const fs::path& path, const Overlay& o) {
  const int w = o.input.width(), h = o.input.height();
  if (!o.truth.same_shape(o.input) || !o.predicted.same_shape(o.input)) {
    throw Error(ErrorKind::DimensionMismatch, "overlay panels differ in size");
  }
  constexpr int gap = 4;
  plot::Canvas cv(4 * w + 3 * gap, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(o.input.at(x, y), 0.0f, 1.0f) * 255.0f));
      const bool t = o.truth.at(x, y) != 0, p = o.predicted.at(x, y) != 0;
      cv.set(x, y, {g, g, g});
      cv.set(w + gap + x, y, t ? plot::kWhite : plot::kBlack);
      cv.set(2 * (w + gap) + x, y, p ? plot::kWhite : plot::kBlack);
      plot::Rgb c{g, g, g};
      if (t && p) c = {0, 200, 0};
      else if (p) c = {220, 0, 0};
      else if (t) c = {0, 80, 255};
      if (t || p) c = {static_cast<std::uint8_t>((c[0] + g) / 2), static_cast<std::uint8_t>((c[1] + g) / 2),
                       static_cast<std::uint8_t>((c[2] + g) / 2)};
      cv.set(3 * (w + gap) + x, y, c);
    }
  }
  cv.write_png(path);
}

void emit_report(const ReportInputs& inputs, const fs::path& out_dir) {
  fs::create_directories(out_dir / "tables");
  fs::create_directories(out_dir / "curves");
  fs::create_directories(out_dir / "overlays");
  json incomplete = json::array();
  for (const auto& [name, rows] : inputs.tables) {
    write_file_atomic(out_dir / "tables" / (name + ".csv"), table_csv(rows));
    write_file_atomic(out_dir / "tables" / (name + ".json"), table_json(rows).dump(2) + "\n");
    for (const auto& r : rows)
      if (!r.missing_folds.empty()) incomplete.push_back(json{{"table", name}, {"config_id", r.config_id}, {"missing_folds", r.missing_folds}});
  }
  for (const auto& c : inputs.curves) {
    write_file_atomic(out_dir / "curves" / (c.name + ".json"), curve_json(c).dump(2) + "\n");
    render_curve(c, out_dir / "curves" / (c.name + ".png"));
  }
  for (const auto& o : inputs.overlays) write_overlay_png(out_dir / "overlays" / (o.name + ".png"), o);

  json notes = inputs.notes;
  notes.push_back("fold std is the sample standard deviation (n-1)");
  notes.push_back("an image whose true and predicted masks are both empty scores 1 on every metric");
  json summary{{"averaging", inputs.averaging == Averaging::macro ? "macro" : "micro"},
               {"notes", notes},
               {"incomplete", incomplete}};
  write_file_atomic(out_dir / "report.json", summary.dump(2) + "\n");
  if (!incomplete.empty()) {
    throw Error(ErrorKind::IncompleteRuns, "missing folds: " + incomplete.dump());
  }
}

}  // namespace orgseg
