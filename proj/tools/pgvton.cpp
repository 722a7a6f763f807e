#include <pgvton/metrics.hpp>
#include <pgvton/pipeline.hpp>
#include <pgvton/png_io.hpp>
#include <pgvton/rng.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace pgvton;

namespace {

struct CkptPaths {
  fs::path tpim, ptm, rsim;
  explicit CkptPaths(const std::string& dir)
      : tpim(fs::path(dir) / "tpim.ckpt"),
        ptm(fs::path(dir) / "ptm.ckpt"),
        rsim(fs::path(dir) / "rsim.ckpt") {}
};

void append_log(const std::string& ckpt_path, const std::string& header,
                const std::vector<std::string>& rows) {
  const std::string path = ckpt_path + ".log.tsv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("train: cannot open log file " + path);
  if (fresh) out << header << '\n';
  for (const std::string& row : rows) out << row << '\n';
}

int run_gen_data(const std::string& out_dir, int count, std::uint64_t seed,
                 int height, int width, double test_fraction) {
  std::mt19937_64 rng(splitmix64(seed));
  std::vector<synthdata::Sample> samples;
  const int n_test = static_cast<int>(count * test_fraction + 0.5);
  for (int i = 0; i < count; ++i) {
    synthdata::SceneSpec spec = synthdata::random_spec(rng, height, width);
    synthdata::Sample s = synthdata::render_sample(spec);
    char id[16];
    std::snprintf(id, sizeof(id), "s%05d", i);
    s.id = id;
    s.split = i < count - n_test ? "train" : "test";
    samples.push_back(std::move(s));
  }
  synthdata::write_dataset(samples, out_dir);
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

std::optional<pipeline::Checkpoint> maybe_resume(const std::string& path,
                                                 const std::string& module) {
  if (!fs::exists(path)) return std::nullopt;
  return pipeline::Checkpoint::load(path, module);
}

int run_train(const std::string& module, const std::string& config_path,
              const std::string& out_path, const std::string& data_override,
              const std::string& encoder_weights) {
  pipeline::Config cfg = pipeline::Config::parse_file(config_path);
  const std::string data_dir =
      data_override.empty() ? cfg.dataset : data_override;
  synthdata::Dataset ds = synthdata::read_dataset(data_dir);
  if (ds.samples.empty())
    throw ValidationError("train: dataset at '" + data_dir + "' is empty");

  std::vector<std::string> rows;
  if (module == "tpim") {
    auto resume = maybe_resume(out_path, "tpim");
    auto result =
        tpim::train(ds, cfg, resume ? &*resume : nullptr, {}, &rows);
    result.checkpoint.save(out_path);
    append_log(out_path, "iteration\tremainder\tcycle\ttotal", rows);
  } else if (module == "ptm" || module == "rsim") {
    metrics::PerceptualEncoder encoder(cfg.encoder_dim);
    if (!encoder_weights.empty()) encoder.load_weights(encoder_weights);
    if (module == "ptm") {
      auto resume = maybe_resume(out_path, "ptm");
      auto result =
          ptm::train(ds, cfg, encoder, resume ? &*resume : nullptr, {}, &rows);
      result.checkpoint.save(out_path);
      append_log(out_path, "iteration\tl_cw\tl_fm\tl_cp\tn3\tn4\tn5\tn6", rows);
    } else {
      auto resume = maybe_resume(out_path, "rsim");
      auto result =
          rsim::train(ds, cfg, encoder, resume ? &*resume : nullptr, {}, &rows);
      result.checkpoint.save(out_path);
      append_log(out_path, "iteration\tloss", rows);
    }
  } else {
    throw ValidationError("train: unknown module '" + module +
                          "' (expected tpim, ptm, or rsim)");
  }
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

struct LoadedModels {
  pipeline::Config cfg;
  std::unique_ptr<metrics::PerceptualEncoder> encoder;
  std::unique_ptr<tpim::Model> tpim_model;
  std::unique_ptr<ptm::TryOnModel> ptm_model;
  std::unique_ptr<rsim::Model> rsim_model;
};

LoadedModels load_models(const std::string& ckpt_dir,
                         const std::string& encoder_weights) {
  CkptPaths paths(ckpt_dir);
  const auto ptm_ckpt = pipeline::Checkpoint::load(paths.ptm.string(), "ptm");
  LoadedModels m;
  m.cfg = pipeline::Config::parse(ptm_ckpt.meta("config"));
  m.encoder = std::make_unique<metrics::PerceptualEncoder>(m.cfg.encoder_dim);
  if (!encoder_weights.empty()) m.encoder->load_weights(encoder_weights);
  m.tpim_model = std::make_unique<tpim::Model>(tpim::from_checkpoint(
      pipeline::Checkpoint::load(paths.tpim.string(), "tpim")));
  m.ptm_model = std::make_unique<ptm::TryOnModel>(
      ptm::from_checkpoint(ptm_ckpt, m.encoder.get()));
  m.rsim_model = std::make_unique<rsim::Model>(rsim::from_checkpoint(
      pipeline::Checkpoint::load(paths.rsim.string(), "rsim"),
      m.encoder.get()));
  return m;
}

int run_tryon_cmd(const std::string& person_id, const std::string& garment_id,
                  const std::string& data_dir, const std::string& ckpt_dir,
                  const std::string& out_png,
                  const std::string& encoder_weights) {
  synthdata::Dataset ds = synthdata::read_dataset(data_dir);
  const synthdata::Sample& person = ds.by_id(person_id);
  const synthdata::Sample& donor = ds.by_id(garment_id);

  LoadedModels m = load_models(ckpt_dir, encoder_weights);
  pipeline::TryOnModels models{m.tpim_model.get(), m.ptm_model.get(),
                               m.rsim_model.get()};
  pipeline::TryOnResult result = pipeline::run_tryon(
      person, donor.garment, donor.garment_mask, models, m.cfg);
  write_png(out_png, result.image);
  std::cout << "try-on written to " << out_png << " (scale "
            << result.selected_scale
            << (result.inpainted ? ", skin inpainted" : ", skin covered")
            << ")\n";
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt_dir,
             const std::string& split, const std::string& out_path,
             const std::string& encoder_weights) {
  synthdata::Dataset ds = synthdata::read_dataset(data_dir);
  const auto idx = ds.split_indices(split);
  if (idx.empty())
    throw ValidationError("eval: split '" + split + "' is empty");

  LoadedModels m = load_models(ckpt_dir, encoder_weights);
  pipeline::TryOnModels models{m.tpim_model.get(), m.ptm_model.get(),
                               m.rsim_model.get()};

  std::ostringstream out;
  out << "id\tmse\tpsnr\tssim\n";
  double sum_mse = 0, sum_ssim = 0;
  for (int i : idx) {
    const synthdata::Sample& s = ds.samples[i];
    // paired reconstruction: re-dress the sample's own garment
    pipeline::TryOnResult r =
        pipeline::run_tryon(s, s.garment, s.garment_mask, models, m.cfg);
    const double mse = metrics::mse_image(r.image, s.person);
    const double p = metrics::psnr(r.image, s.person);
    const double ss = metrics::ssim(r.image, s.person);
    out << s.id << '\t' << mse << '\t' << p << '\t' << ss << '\n';
    sum_mse += mse;
    sum_ssim += ss;
  }
  const double mean_mse = sum_mse / idx.size();
  const double mean_psnr =
      mean_mse == 0.0 ? std::numeric_limits<double>::infinity()
                      : 10.0 * std::log10(255.0 * 255.0 / mean_mse);
  out << "mean\t" << mean_mse << '\t' << mean_psnr << '\t'
      << sum_ssim / idx.size() << '\n';

  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw IoError("eval: cannot open " + out_path);
    f << out.str();
  }
  return 0;
}

std::vector<double> parse_tau_range(const std::string& text) {
  // "a:b:step" or a comma list
  std::vector<double> taus;
  if (text.find(':') != std::string::npos) {
    double a, b, step;
    char c1, c2;
    std::istringstream in(text);
    if (!(in >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':')
      throw ValidationError("select-trend: bad --tau range '" + text + "'");
    if (step <= 0) throw ValidationError("select-trend: step must be positive");
    for (double t = a; t <= b + 1e-9; t += step) taus.push_back(t);
  } else {
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) taus.push_back(std::stod(tok));
  }
  for (double t : taus)
    if (t < 0.0 || t > 1.0)
      throw ValidationError("select-trend: tau values must lie in [0,1]");
  return taus;
}

int run_select_trend(const std::string& data_dir, const std::string& ckpt_dir,
                     const std::string& tau_text, const std::string& out_path,
                     const std::string& encoder_weights) {
  synthdata::Dataset ds = synthdata::read_dataset(data_dir);
  const std::vector<double> taus = parse_tau_range(tau_text);

  CkptPaths paths(ckpt_dir);
  const auto ptm_ckpt = pipeline::Checkpoint::load(paths.ptm.string(), "ptm");
  pipeline::Config cfg = pipeline::Config::parse(ptm_ckpt.meta("config"));
  metrics::PerceptualEncoder encoder(cfg.encoder_dim);
  if (!encoder_weights.empty()) encoder.load_weights(encoder_weights);
  ptm::TryOnModel model = ptm::from_checkpoint(ptm_ckpt, &encoder);

  std::unique_ptr<tpim::Model> tpim_model;
  if (fs::exists(paths.tpim))
    tpim_model = std::make_unique<tpim::Model>(tpim::from_checkpoint(
        pipeline::Checkpoint::load(paths.tpim.string(), "tpim")));

  const auto rows = metrics::selection_proportions(ds, model, taus,
                                                   tpim_model.get(), cfg.seed);
  std::ostringstream out;
  out << "tau\tp3\tp4\tp5\tp6\n";
  for (const auto& row : rows) {
    out << row.tau;
    for (double p : row.proportion) out << '\t' << p;
    out << '\n';
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw IoError("select-trend: cannot open " + out_path);
    f << out.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progressive virtual try-on on synthetic data"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  int count = 64, height = 64, width = 48;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;
  std::string out_dir;
  gen->add_option("--count", count, "number of samples");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--height", height, "image height");
  gen->add_option("--width", width, "image width");
  gen->add_option("--test-fraction", test_fraction, "test split fraction");

  // train
  auto* train = app.add_subcommand("train", "train one module (resumable)");
  std::string module, config_path, ckpt_out, data_override, encoder_weights;
  train->add_option("module", module, "tpim, ptm, or rsim")->required();
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", ckpt_out, "checkpoint path")->required();
  train->add_option("--data", data_override, "dataset directory override");
  train->add_option("--encoder-weights", encoder_weights,
                    "optional pretrained perceptual-encoder file");

  // try-on
  auto* tryon = app.add_subcommand("try-on", "dress one person in a garment");
  std::string person_id, garment_id, data_dir, ckpt_dir, out_png;
  std::string tryon_encoder_weights;
  tryon->add_option("--person", person_id, "person sample id")->required();
  tryon->add_option("--garment", garment_id, "garment donor sample id")
      ->required();
  tryon->add_option("--data", data_dir, "dataset directory")->required();
  tryon->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory")->required();
  tryon->add_option("--out", out_png, "output PNG")->required();
  tryon->add_option("--encoder-weights", tryon_encoder_weights,
                    "optional pretrained perceptual-encoder file");

  // eval
  auto* eval = app.add_subcommand("eval", "paired-reconstruction metrics");
  std::string eval_data, eval_ckpt, eval_split = "test", eval_out;
  std::string eval_encoder_weights;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--ckpt-dir", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--split", eval_split, "dataset split");
  eval->add_option("--out", eval_out, "output TSV (stdout when omitted)");
  eval->add_option("--encoder-weights", eval_encoder_weights,
                   "optional pretrained perceptual-encoder file");

  // select-trend
  auto* trend = app.add_subcommand("select-trend",
                                   "scale-selection proportions per tau");
  std::string trend_data, trend_ckpt, trend_tau = "0.0:1.0:0.1", trend_out;
  std::string trend_encoder_weights;
  trend->add_option("--data", trend_data, "dataset directory")->required();
  trend->add_option("--ckpt-dir", trend_ckpt, "checkpoint directory")
      ->required();
  trend->add_option("--tau", trend_tau, "tau range a:b:step or comma list");
  trend->add_option("--out", trend_out, "output TSV (stdout when omitted)");
  trend->add_option("--encoder-weights", trend_encoder_weights,
                    "optional pretrained perceptual-encoder file");

  // erasure-ladder
  auto* ladder = app.add_subcommand("erasure-ladder",
                                    "print the erasure-extent table");
  bool dump = false;
  ladder->add_flag("--dump", dump, "emit the TSV table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return run_gen_data(out_dir, count, seed, height, width, test_fraction);
    if (train->parsed())
      return run_train(module, config_path, ckpt_out, data_override,
                       encoder_weights);
    if (tryon->parsed())
      return run_tryon_cmd(person_id, garment_id, data_dir, ckpt_dir, out_png,
                           tryon_encoder_weights);
    if (eval->parsed())
      return run_eval(eval_data, eval_ckpt, eval_split, eval_out,
                      eval_encoder_weights);
    if (trend->parsed())
      return run_select_trend(trend_data, trend_ckpt, trend_tau, trend_out,
                              trend_encoder_weights);
    if (ladder->parsed()) {
      std::cout << rsim::erasure_ladder_table();
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
