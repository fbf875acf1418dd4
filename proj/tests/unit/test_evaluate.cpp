#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "orgseg/error.hpp"
#include "orgseg/evaluate.hpp"
#include "support.hpp"

using namespace orgseg;
namespace fs = std::filesystem;

namespace {

MetricsRecord fold_record(int fold, double f1) {
  MetricsRecord r;
  r.fold = fold;
  r.metrics.f1 = f1;
  r.metrics.accuracy = 0.5 + 0.1 * fold;
  return r;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("confusion equals a pixel loop") {
  for (int t = 0; t < 100; ++t) {
    const auto y = testsupport::random_mask(8, 8, 1000 + t, 0.4);
    const auto p = testsupport::random_mask(8, 8, 5000 + t, 0.6);
    ConfusionCounts want;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool a = y.at(c, r), b = p.at(c, r);
        if (a && b) ++want.tp;
        else if (!a && b) ++want.fp;
        else if (a && !b) ++want.fn;
        else ++want.tn;
      }
    CHECK(confusion(y, p) == want);
  }
  try {
    confusion(Mask2D(2, 2), Mask2D(2, 3));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("metric values") {
  const Metrics m = metrics({6, 2, 4, 8});
  CHECK(m.accuracy == doctest::Approx(14.0 / 20));
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.6));
  CHECK(m.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK(m.jaccard == doctest::Approx(0.5));
  const Metrics empty = metrics({0, 0, 0, 16});
  CHECK(empty.f1 == 1.0);
  CHECK(empty.jaccard == 1.0);
  CHECK(empty.accuracy == 1.0);
  const Metrics miss = metrics({0, 0, 5, 11});
  CHECK(miss.precision == 0.0);
  CHECK(miss.f1 == 0.0);

  const Image2D soft(2, 1, std::vector<float>{0.5f, 0.49f});
  const Mask2D bin = binarize(soft);
  CHECK(bin.at(0, 0) == 1);
  CHECK(bin.at(1, 0) == 0);
}

TEST_CASE("macro and micro averaging") {
  const std::vector<ConfusionCounts> per{{1, 0, 0, 3}, {0, 3, 1, 0}};
  const Metrics macro = average(per, Averaging::macro);
  CHECK(macro.f1 == doctest::Approx(0.5));
  const Metrics micro = average(per, Averaging::micro);
  CHECK(micro.f1 == doctest::Approx(metrics({1, 3, 1, 3}).f1));
  CHECK_THROWS(average({}, Averaging::macro));

  std::vector<Mask2D> truth{testsupport::random_mask(4, 4, 1)}, pred{testsupport::random_mask(4, 4, 2)};
  const auto rec = evaluate_masks(truth, pred, 3);
  CHECK(rec.fold == 3);
  CHECK(rec.per_image.size() == 1);
  const auto back = MetricsRecord::from_json(rec.to_json());
  CHECK(back.per_image == rec.per_image);
  CHECK(back.metrics.f1 == rec.metrics.f1);
  CHECK(back.fold == 3);
}

TEST_CASE("summaries and aggregation") {
  const Summary s = summarize({0.5, 0.7, 0.6, 0.9, 0.8});
  CHECK(s.best == 0.9);
  CHECK(s.mean == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(std::sqrt(0.025)).epsilon(1e-12));
  CHECK(s.n == 5);
  CHECK(summarize({0.4}).std == 0.0);
  CHECK(std::isnan(summarize({}).mean));

  ReportRow row;
  row.folds_expected = 5;
  aggregate(row, {fold_record(0, 0.5), fold_record(2, 0.7), fold_record(4, 0.6)});
  CHECK(row.missing_folds == std::vector<int>{1, 3});
  CHECK(row.scores["f1"].best == 0.7);
  CHECK(row.scores["f1"].mean == doctest::Approx(0.6));
  CHECK(row.scores["accuracy"].best == doctest::Approx(0.9));
}

TEST_CASE("report layout") {
  const auto dir = testsupport::scratch_dir("report");
  ReportRow row;
  row.config_id = "c2-x";
  row.framework = "ssl";
  row.encoder = "resnet50";
  row.freeze_encoder = true;
  row.loss = "iou";
  row.augmentation = "blur";
  row.pretext_fraction = 1.0;
  row.budget = 114;
  std::vector<MetricsRecord> folds;
  for (int i = 0; i < 5; ++i) folds.push_back(fold_record(i, 0.5 + 0.05 * i));
  aggregate(row, folds);

  ReportInputs in;
  in.tables["t"] = {row};
  Curve curve;
  curve.name = "f1_vs_budget";
  curve.x_label = "labels";
  CurveSeries series;
  series.name = "supervised";
  series.x = {200, 300};
  series.per_fold = {{0.5, 0.6}, {0.55, 0.65}};
  for (const auto& f : series.per_fold) series.summary.push_back(summarize(f));
  curve.series.push_back(series);
  curve.baselines.push_back({0.7, "ssl"});
  in.curves.push_back(curve);
  in.overlays.push_back({"ov", testsupport::random_image(8, 8, 1), testsupport::random_mask(8, 8, 2), testsupport::random_mask(8, 8, 3)});
  emit_report(in, dir);

  const std::string csv = testsupport::slurp(dir / "tables" / "t.csv");
  CHECK(csv.rfind("config_id,framework,encoder,freeze_encoder,loss,augmentation,pretext_fraction,budget,best_f1,mean_f1,std_f1", 0) == 0);
  CHECK(csv.find("c2-x,ssl,resnet50,true,iou,blur,1.000000,114,0.700000,0.600000,") != std::string::npos);
  CHECK(fs::exists(dir / "tables" / "t.json"));
  CHECK(fs::exists(dir / "curves" / "f1_vs_budget.png"));
  CHECK(fs::exists(dir / "curves" / "f1_vs_budget.json"));
  CHECK(fs::exists(dir / "overlays" / "ov.png"));
  const auto report = nlohmann::json::parse(testsupport::slurp(dir / "report.json"));
  CHECK(report["averaging"] == "macro");

  row.missing_folds = {4};
  in.tables["t"] = {row};
  try {
    emit_report(in, testsupport::scratch_dir("report_incomplete"));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompleteRuns);
  }
}

}  // TEST_SUITE
