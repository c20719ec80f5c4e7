#include "photocon/reports.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "photocon/error.hpp"

namespace photocon {

namespace {

// JSON has no infinities; PSNR of identical images is reported as a string.
Json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

Json box_json(const BoundingBox& b) { return {{"x", b.x}, {"y", b.y}, {"side", b.side}}; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Json to_json(const LossTerms& t) {
  return {{"triplet", t.triplet}, {"intra", t.intra}, {"scale", t.scale}, {"mc", t.mc}, {"rot", t.rot}};
}

Json to_json(const LossBreakdown& b) {
  return {{"total", b.total}, {"raw", to_json(b.raw)}, {"weighted", to_json(b.weighted)}};
}

Json to_json(const NetworkConfig& c) {
  return {{"levels", c.levels},
          {"base_width", c.base_width},
          {"out_channels", c.out_channels},
          {"nonlinearity", c.nonlinearity},
          {"leaky_slope", c.leaky_slope}};
}

Json to_json(const LossWeights& w) {
  return {{"w_triplet", w.w_triplet}, {"w_intra", w.w_intra},       {"w_scale", w.w_scale},
          {"w_mc", w.w_mc},           {"w_rot", w.w_rot},           {"margin", w.margin},
          {"epsilon_norm", w.epsilon_norm}, {"intra_mean_l2", w.intra_mean_l2}};
}

Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epoch_size", c.epoch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"loss", to_json(c.loss)},
          {"network", to_json(c.network)}};
}

Json to_json(const EccConfig& c) {
  return {{"max_iterations", c.max_iterations},
          {"epsilon", c.epsilon},
          {"pyramid_levels", c.pyramid_levels},
          {"initial", to_json(c.initial)}};
}

Json to_json(const AffineWarp& w) { return Json(w.m); }

Json to_json(const RocCurve& r) { return {{"auc", r.auc}, {"thresholds", r.thresholds}, {"success", r.success}}; }

Json to_json(const MatchBenchReport& r) {
  Json j;
  j["config"] = {{"patch_sizes", r.config.patch_sizes},
                 {"patches_per_scene", r.config.patches_per_scene},
                 {"sigma_min", r.config.sigma_min},
                 {"max_attempts", r.config.max_attempts},
                 {"seed", r.config.seed},
                 {"method", r.config.method == MatchMethod::kFft ? "fft" : "naive"}};
  j["transformed"] = r.transformed;
  j["auc"] = r.overall.auc;
  j["skipped"] = r.skipped;
  Json sizes = Json::array();
  for (const auto& s : r.sizes)
    sizes.push_back({{"patch_size", s.patch_size}, {"trials", s.trials}, {"skipped", s.skipped}, {"auc", s.roc.auc},
                     {"curve", to_json(s.roc)}});
  j["sizes"] = std::move(sizes);
  j["curve"] = to_json(r.overall);
  Json trials = Json::array();
  for (const auto& t : r.trials)
    trials.push_back({{"scene", t.scene},
                      {"patch_size", t.patch_size},
                      {"true_box", box_json(t.truth)},
                      {"predicted_box", box_json(t.predicted)},
                      {"score", number(t.score)},
                      {"iou", t.iou}});
  j["trials"] = std::move(trials);
  return j;
}

Json to_json(const RegistrationBenchReport& r) {
  Json j;
  j["config"] = {{"angles", r.config.angles},
                 {"max_translation", r.config.max_translation},
                 {"seed", r.config.seed},
                 {"ecc", to_json(r.config.ecc)}};
  j["transformed"] = r.transformed;
  Json angles = Json::array();
  for (const auto& a : r.angles)
    angles.push_back({{"angle", a.angle},
                      {"trials", a.trials},
                      {"failures", a.failures},
                      {"mean_psnr", number(a.mean_psnr)},
                      {"mean_psnr_truth", number(a.mean_psnr_truth)}});
  j["angles"] = std::move(angles);
  Json trials = Json::array();
  for (const auto& t : r.trials)
    trials.push_back({{"scene", t.scene},
                      {"angle", t.angle},
                      {"warp", to_json(t.applied)},
                      {"inverse_estimate", to_json(t.estimate)},
                      {"psnr", number(t.psnr)},
                      {"psnr_truth", number(t.psnr_truth)},
                      {"iterations", t.iterations},
                      {"coefficient", number(t.coefficient)},
                      {"failed", t.failed},
                      {"error", t.error}});
  j["trials"] = std::move(trials);
  return j;
}

Json to_json(const InvarianceReport& r) {
  auto stats = [](const InvarianceStats& s) {
    return Json{{"epsilon_hat", s.epsilon_hat}, {"cross", s.cross}, {"ratio", s.ratio}};
  };
  Json j;
  j["config"] = {{"patch", r.config.patch},
                 {"samples_per_scene", r.config.samples_per_scene},
                 {"sigma_min", r.config.sigma_min},
                 {"max_attempts", r.config.max_attempts},
                 {"seed", r.config.seed}};
  j["raw"] = stats(r.raw);
  j["transformed"] = r.transformed ? stats(*r.transformed) : Json(nullptr);
  j["samples"] = r.samples.size();
  return j;
}

Json to_json(const CropCommutationReport& r) {
  return {{"config",
           {{"crops_per_image", r.config.crops_per_image},
            {"crop_side", r.config.crop_side},
            {"border", r.config.border},
            {"seed", r.config.seed}}},
          {"per_image", r.per_image},
          {"mean", r.mean}};
}

std::string trials_csv(const MatchBenchReport& r) {
  std::ostringstream os;
  os << "scene,patch_size,true_x,true_y,pred_x,pred_y,score,iou\n";
  for (const auto& t : r.trials)
    os << t.scene << ',' << t.patch_size << ',' << t.truth.x << ',' << t.truth.y << ',' << t.predicted.x << ','
       << t.predicted.y << ',' << fmt(t.score) << ',' << fmt(t.iou) << '\n';
  return os.str();
}

std::string trials_csv(const RegistrationBenchReport& r) {
  std::ostringstream os;
  os << "scene,angle,w_a,w_b,w_tx,w_c,w_d,w_ty,e_a,e_b,e_tx,e_c,e_d,e_ty,psnr,psnr_truth,iterations,coefficient,"
        "failed\n";
  for (const auto& t : r.trials) {
    os << t.scene << ',' << fmt(t.angle);
    for (double v : t.applied.m) os << ',' << fmt(v);
    for (double v : t.estimate.m) os << ',' << fmt(v);
    os << ',' << fmt(t.psnr) << ',' << fmt(t.psnr_truth) << ',' << t.iterations << ',' << fmt(t.coefficient) << ','
       << (t.failed ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string samples_csv(const InvarianceReport& r) {
  std::ostringstream os;
  os << "scene,other_scene,x,y,side,same_raw,cross_raw,same_transformed,cross_transformed\n";
  for (const auto& s : r.samples)
    os << s.scene << ',' << s.other_scene << ',' << s.box.x << ',' << s.box.y << ',' << s.box.side << ','
       << fmt(s.same_raw) << ',' << fmt(s.cross_raw) << ',' << fmt(s.same_transformed) << ','
       << fmt(s.cross_transformed) << '\n';
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw DataError("SHA-256 unavailable");
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  static constexpr char digits[] = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(digits[md[i] >> 4]);
    hex.push_back(digits[md[i] & 15]);
  }
  return hex;
}

}  // namespace photocon
