// Command-line surface for the factored neural volume renderer: synthetic
// data generation, trajectory initialization, joint training, re-rendering,
// scene edits, mesh extraction, evaluation, and gradient self-checks.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fnvr/fnvr.hpp"

namespace {

using namespace fnvr;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
  uint64_t seed = 0;
  int threads = 0;
  bool f64 = false;
};

void apply_threads(const CommonOpts& o) {
  int threads = o.threads;
  if (threads <= 0)
    if (const char* env = std::getenv("FNVR_THREADS")) threads = std::atoi(env);
  if (threads > 0) thread_count() = threads;
}

// key=value overrides onto a train config; unknown keys list the known ones
void apply_override(TrainConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override '" + kv + "' is not key=value");
  const std::string key = kv.substr(0, eq);
  const double value = std::stod(kv.substr(eq + 1));
  if (key == "iterations") cfg.iterations = static_cast<int>(value);
  else if (key == "rays") cfg.rays_per_batch = static_cast<int>(value);
  else if (key == "fine") cfg.sampling.n_fine = static_cast<int>(value);
  else if (key == "coarse") cfg.sampling.coarse_per_interval = static_cast<int>(value);
  else if (key == "min-per-interval") cfg.sampling.min_per_interval = static_cast<int>(value);
  else if (key == "lr-fields") cfg.lr_fields = value;
  else if (key == "lr-trajectories") cfg.lr_trajectories = value;
  else if (key == "lr-deform") cfg.lr_deform_codes = value;
  else if (key == "lr-sharpness") cfg.lr_sharpness = value;
  else if (key == "lambda-depth") cfg.weights.depth = value;
  else if (key == "lambda-free") cfg.weights.freespace = value;
  else if (key == "lambda-surface") cfg.weights.surface = value;
  else if (key == "warmup") cfg.warmup_freeze_trajectories = static_cast<int>(value);
  else if (key == "surface-samples") cfg.surface_samples = static_cast<int>(value);
  else if (key == "cosine-decay") cfg.cosine_decay = value != 0;
  else if (key == "checkpoint-every") cfg.checkpoint_every = static_cast<int>(value);
  else
    throw std::invalid_argument(
        "unknown override key '" + key +
        "'; known keys: iterations rays fine coarse min-per-interval lr-fields "
        "lr-trajectories lr-deform lr-sharpness lambda-depth lambda-free lambda-surface "
        "warmup surface-samples cosine-decay checkpoint-every");
}

// object sizing presets
ObjectConfig net_config(const std::string& net) {
  ObjectConfig cfg;
  if (net == "default") return cfg;
  if (net == "small") {
    cfg.sdf.hidden = 64;
    cfg.sdf.hidden_layers = 3;
    cfg.sdf.skip_layer = 1;
    cfg.sdf.feature_dim = 16;
    cfg.sdf.posenc.num_frequencies = 4;
    cfg.color.hidden = 64;
    cfg.color.hidden_layers = 2;
    cfg.color.view_posenc.num_frequencies = 2;
    cfg.deform.hidden = 32;
    cfg.deform.latent_dim = 8;
    return cfg;
  }
  if (net == "tiny") {
    cfg.sdf.hidden = 48;
    cfg.sdf.hidden_layers = 2;
    cfg.sdf.skip_layer = 1;
    cfg.sdf.feature_dim = 12;
    cfg.sdf.posenc.num_frequencies = 4;
    cfg.color.hidden = 48;
    cfg.color.hidden_layers = 2;
    cfg.color.view_posenc.num_frequencies = 2;
    cfg.deform.hidden = 32;
    cfg.deform.latent_dim = 8;
    return cfg;
  }
  fail("unknown net preset '" + net + "'; known: default small tiny");
}

std::vector<Pose> poses_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("cannot open pose file " + path);
  nlohmann::json j;
  f >> j;
  std::vector<Pose> poses;
  const auto& arr = j.is_array() ? j : j.at("poses");
  for (const auto& pj : arr) poses.push_back(detail_ds::pose_from_json(pj));
  return poses;
}

void write_images(const RenderedImages& imgs, const std::string& dir, int frame) {
  fs::create_directories(dir);
  char name[128];
  std::snprintf(name, sizeof(name), "%s/color_%06d.ppm", dir.c_str(), frame);
  Image<uint8_t> color8(imgs.color.width, imgs.color.height, 3);
  for (size_t i = 0; i < color8.data.size(); ++i)
    color8.data[i] = static_cast<uint8_t>(
        std::clamp(static_cast<int>(std::lround(imgs.color.data[i] * 255.0f)), 0, 255));
  write_ppm(name, color8);
  std::snprintf(name, sizeof(name), "%s/depth_%06d.pfm", dir.c_str(), frame);
  write_pfm(name, imgs.depth);
  for (const auto& [oid, wimg] : imgs.object_weight) {
    std::snprintf(name, sizeof(name), "%s/weight_obj%d_%06d.pgm", dir.c_str(), oid, frame);
    Image<uint8_t> w8(wimg.width, wimg.height, 1);
    for (size_t i = 0; i < w8.data.size(); ++i)
      w8.data[i] = static_cast<uint8_t>(
          std::clamp(static_cast<int>(std::lround(wimg.data[i] * 255.0f)), 0, 255));
    write_pgm(name, w8);
  }
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, const CommonOpts& opts,
                 const NoiseParams& noise_in) {
  SceneSpec spec = load_scene_spec(spec_path);
  NoiseParams noise = noise_in;
  noise.seed = opts.seed;
  generate_sequence(spec, noise, out_dir);
  std::printf("wrote sequence (%d frames, %zu objects) to %s\n", spec.frames, spec.objects.size(),
              out_dir.c_str());
  return kExitOk;
}

int cmd_init_tracks(const std::string& seq_dir, bool icp_refine) {
  const RGBDSequence seq = load_sequence(seq_dir);
  const auto corr = load_sequence_correspondences(seq);
  const TrackingResult tracks = build_trajectories(seq, corr, icp_refine);
  save_tracks(seq_dir + "/tracks.json", tracks);
  std::printf("wrote %s (%d frames, %zu objects)\n", (seq_dir + "/tracks.json").c_str(),
              seq.manifest.frames, tracks.objects.size());
  return kExitOk;
}

template <class Real>
int cmd_train(const std::string& seq_dir, const std::string& out_ckpt, TrainConfig cfg,
              const std::string& net, const CommonOpts& opts) {
  const RGBDSequence seq = load_sequence(seq_dir);
  TrackingResult tracks;
  const TrackingResult* tracks_ptr = nullptr;
  if (fs::exists(seq_dir + "/tracks.json")) {
    tracks = load_tracks(seq_dir + "/tracks.json");
    tracks_ptr = &tracks;
  }
  auto scene = build_scene_from_sequence<Real>(seq, net_config(net), tracks_ptr, opts.seed);
  cfg.seed = opts.seed;
  cfg.checkpoint_path = out_ckpt;
  const TrainStats stats = train(seq, scene, cfg);
  save_scene(out_ckpt, scene);
  std::printf("trained %d iterations in %.1f s; final loss %.5f; wrote %s\n", stats.iterations_run,
              stats.wall_seconds, stats.loss_curve.empty() ? 0.0 : stats.loss_curve.back(),
              out_ckpt.c_str());
  return kExitOk;
}

template <class Real>
int cmd_render(const std::string& ckpt, int frame, const std::string& camera_path,
               const std::string& out_dir, SamplingConfig cfg) {
  auto scene = load_scene<Real>(ckpt);
  if (!camera_path.empty()) {
    const auto poses = poses_from_json_file(camera_path);
    for (size_t i = 0; i < poses.size(); ++i) {
      const int t = std::min<int>(static_cast<int>(i), scene.num_frames - 1);
      auto imgs = render_image(scene, t, &poses[i], cfg);
      write_images(imgs, out_dir, static_cast<int>(i));
    }
    std::printf("rendered %zu camera-path frames to %s\n", poses.size(), out_dir.c_str());
  } else {
    if (frame < 0 || frame >= scene.num_frames) fail("frame out of range");
    auto imgs = render_image(scene, frame, nullptr, cfg);
    write_images(imgs, out_dir, frame);
    std::printf("rendered frame %d to %s\n", frame, out_dir.c_str());
  }
  return kExitOk;
}

template <class Real>
int cmd_edit(const std::string& in_ckpt, const std::string& edits_path,
             const std::string& out_ckpt) {
  auto scene = load_scene<Real>(in_ckpt);
  std::ifstream f(edits_path);
  if (!f) fail("cannot open edit script " + edits_path);
  nlohmann::json j;
  f >> j;
  EditScript script;
  for (const auto& ej : j) {
    Edit e;
    const std::string op = ej.at("op");
    if (op == "delete-object") {
      e.kind = Edit::Kind::DeleteObject;
      e.id = ej.at("id");
    } else if (op == "replace-object-trajectory") {
      e.kind = Edit::Kind::ReplaceObjectTrajectory;
      e.id = ej.at("id");
      for (const auto& pj : ej.at("poses")) e.poses.push_back(detail_ds::pose_from_json(pj));
    } else if (op == "replace-camera-trajectory") {
      e.kind = Edit::Kind::ReplaceCameraTrajectory;
      for (const auto& pj : ej.at("poses")) e.poses.push_back(detail_ds::pose_from_json(pj));
    } else if (op == "clone-object") {
      e.kind = Edit::Kind::CloneObject;
      e.id = ej.at("id");
      for (const auto& pj : ej.at("poses")) e.poses.push_back(detail_ds::pose_from_json(pj));
    } else {
      fail("unknown edit op '" + op + "'");
    }
    script.push_back(std::move(e));
  }
  auto edited = apply_edit(scene, script);
  save_scene(out_ckpt, edited);
  std::printf("applied %zu edits; wrote %s\n", script.size(), out_ckpt.c_str());
  return kExitOk;
}

template <class Real>
int cmd_mesh(const std::string& ckpt, int object_id, int resolution, const std::string& out_path) {
  auto scene = load_scene<Real>(ckpt);
  if (resolution < 2) fail("mesh resolution must be >= 2");
  const int idx = scene.index_of(object_id);
  if (idx < 0) fail("unknown object id " + std::to_string(object_id));
  ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(idx)];
  const AABB& box = obj.aabb;
  GridTransform tf;
  tf.origin = box.lo;
  tf.spacing = {(box.hi.x - box.lo.x) / (resolution - 1), (box.hi.y - box.lo.y) / (resolution - 1),
                (box.hi.z - box.lo.z) / (resolution - 1)};
  std::vector<double> values(static_cast<size_t>(resolution) * resolution * resolution);
  const Vec3 c = box.center(), h = box.half_extent();
  for (int z = 0; z < resolution; ++z) {
    Tensor<Real> pts = Tensor<Real>::zeros({resolution * resolution, 3});
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        const Vec3 p = tf.apply(x, y, z);
        const int r = y * resolution + x;
        pts.at(r, 0) = static_cast<Real>((p.x - c.x) / h.x);
        pts.at(r, 1) = static_cast<Real>((p.y - c.y) / h.y);
        pts.at(r, 2) = static_cast<Real>((p.z - c.z) / h.z);
      }
    const Tensor<Real> g = obj.sdf.eval_g(pts);
    for (int i = 0; i < resolution * resolution; ++i)
      values[(static_cast<size_t>(z) * resolution * resolution) + i] =
          static_cast<double>(g.v[static_cast<size_t>(i)]);
  }
  const TriangleMesh mesh = marching_cubes(values, resolution, resolution, resolution, tf, 0.0);
  write_obj(out_path, mesh);
  std::printf("wrote mesh (%zu vertices, %zu triangles) to %s\n", mesh.vertices.size(),
              mesh.triangles.size(), out_path.c_str());
  return kExitOk;
}

template <class Real>
int cmd_eval(const std::string& ckpt, const std::string& seq_dir, const std::string& report_path,
             SamplingConfig cfg) {
  auto scene = load_scene<Real>(ckpt);
  const RGBDSequence seq = load_sequence(seq_dir);
  const MetricsReport rep = evaluate(scene, seq, cfg);
  const nlohmann::json j = rep.to_json();
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) fail("cannot write report " + report_path);
    f << j.dump(1) << "\n";
  }
  std::printf("%s\n", j.dump(1).c_str());
  return kExitOk;
}

int cmd_grad_check(uint64_t seed) {
  bool ok = true;
  for (const auto& [name, err] : op_gradient_report(seed ? seed : 7, 100)) {
    std::printf("%-20s max rel err %.3e %s\n", name.c_str(), err, err < 1e-4 ? "ok" : "FAIL");
    ok = ok && err < 1e-4;
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factored neural volume renderer"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--seed", opts.seed, "RNG seed controlling all randomness");
  app.add_option("--threads", opts.threads, "worker threads (default: hardware, or FNVR_THREADS)");
  app.add_flag("--f64", opts.f64, "run in 64-bit verification mode");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D sequence");
  std::string spec_path, out_dir;
  NoiseParams noise;
  gen->add_option("spec", spec_path, "scene spec JSON")->required();
  gen->add_option("out", out_dir, "output sequence directory")->required();
  gen->add_option("--noise-sigma0", noise.sigma0);
  gen->add_option("--noise-sigma1", noise.sigma1);
  gen->add_option("--noise-dropout", noise.dropout_base);
  gen->add_option("--noise-grazing-exp", noise.grazing_exponent);
  gen->add_option("--mask-erosion", noise.mask_erosion);

  auto* init = app.add_subcommand("init-tracks", "estimate trajectories from correspondences");
  std::string seq_dir;
  bool icp_refine = false;
  init->add_option("seq", seq_dir, "sequence directory")->required();
  init->add_flag("--icp-refine", icp_refine, "refine alignments with ICP on full clouds");

  auto* tr = app.add_subcommand("train", "jointly optimize the factored scene");
  std::string train_seq, train_ckpt, net = "default";
  std::vector<std::string> overrides;
  TrainConfig tcfg;
  tr->add_option("seq", train_seq, "sequence directory")->required();
  tr->add_option("out", train_ckpt, "output checkpoint")->required();
  tr->add_option("--net", net, "network preset: default, small, tiny");
  tr->add_option("--set", overrides, "config override key=value (repeatable)");
  tr->add_option("--loss-csv", tcfg.loss_csv, "loss curve CSV path");
  tr->add_flag("--verbose", tcfg.verbose, "log losses while training");

  auto* rd = app.add_subcommand("render", "render frames from a checkpoint");
  std::string render_ckpt, camera_path, render_out;
  int render_frame = 0;
  SamplingConfig rcfg;
  rd->add_option("ckpt", render_ckpt, "checkpoint")->required();
  rd->add_option("--frame", render_frame, "frame index");
  rd->add_option("--camera-path", camera_path, "JSON pose list rendered in order");
  rd->add_option("--out", render_out, "output directory")->required();
  rd->add_option("--fine", rcfg.n_fine, "fine samples per ray");
  rd->add_option("--coarse", rcfg.coarse_per_interval, "coarse samples per interval");

  auto* ed = app.add_subcommand("edit", "apply an edit script to a checkpoint");
  std::string edit_in, edit_script, edit_out;
  ed->add_option("ckpt", edit_in, "input checkpoint")->required();
  ed->add_option("edits", edit_script, "edit script JSON")->required();
  ed->add_option("out", edit_out, "output checkpoint")->required();

  auto* me = app.add_subcommand("mesh", "extract an object mesh via marching cubes");
  std::string mesh_ckpt, mesh_out;
  int mesh_object = 0, mesh_res = 128;
  me->add_option("ckpt", mesh_ckpt, "checkpoint")->required();
  me->add_option("--object", mesh_object, "object id")->required();
  me->add_option("--resolution", mesh_res, "grid resolution per axis");
  me->add_option("--out", mesh_out, "output OBJ path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a sequence");
  std::string eval_ckpt, eval_seq, eval_report;
  SamplingConfig ecfg;
  ev->add_option("ckpt", eval_ckpt, "checkpoint")->required();
  ev->add_option("seq", eval_seq, "sequence directory")->required();
  ev->add_option("--report", eval_report, "metrics report JSON path");
  ev->add_option("--fine", ecfg.n_fine, "fine samples per ray");

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every op kind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  apply_threads(opts);
  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, out_dir, opts, noise);
    if (init->parsed()) return cmd_init_tracks(seq_dir, icp_refine);
    if (tr->parsed()) {
      for (const auto& kv : overrides) apply_override(tcfg, kv);
      return opts.f64 ? cmd_train<double>(train_seq, train_ckpt, tcfg, net, opts)
                      : cmd_train<float>(train_seq, train_ckpt, tcfg, net, opts);
    }
    if (rd->parsed()) {
      rcfg.seed = opts.seed;
      return opts.f64
                 ? cmd_render<double>(render_ckpt, render_frame, camera_path, render_out, rcfg)
                 : cmd_render<float>(render_ckpt, render_frame, camera_path, render_out, rcfg);
    }
    if (ed->parsed())
      return opts.f64 ? cmd_edit<double>(edit_in, edit_script, edit_out)
                      : cmd_edit<float>(edit_in, edit_script, edit_out);
    if (me->parsed())
      return opts.f64 ? cmd_mesh<double>(mesh_ckpt, mesh_object, mesh_res, mesh_out)
                      : cmd_mesh<float>(mesh_ckpt, mesh_object, mesh_res, mesh_out);
    if (ev->parsed()) {
      ecfg.seed = opts.seed;
      return opts.f64 ? cmd_eval<double>(eval_ckpt, eval_seq, eval_report, ecfg)
                      : cmd_eval<float>(eval_ckpt, eval_seq, eval_report, ecfg);
    }
    if (gc->parsed()) return cmd_grad_check(opts.seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    const bool io = msg.find("open") != std::string::npos ||
                    msg.find("missing") != std::string::npos ||
                    msg.find("write") != std::string::npos ||
                    msg.find("truncated") != std::string::npos;
    return io ? kExitIo : kExitNumeric;
  }
  return kExitUsage;
}
