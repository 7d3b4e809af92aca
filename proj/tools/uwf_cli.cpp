// uwf: train, run and evaluate the two-stage UWF enhancement pipeline.
//
//   uwf train    --stage fred|rice --config FILE [--set key=value]... [--fred CKPT]
//   uwf enhance  --input PATH|DIR --output DIR [--fred CKPT] [--rice CKPT]
//                [--no-fred] [--no-rice] [--save-intermediate] [--jobs N]
//   uwf evaluate --dir DIR [--baseline DIR] --report OUT.csv [--plot OUT.png] [--jobs N]
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "uwf/config.hpp"
#include "uwf/image_io.hpp"
#include "uwf/quality.hpp"
#include "uwf/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::vector<fs::path> collect_inputs(const fs::path& input) {
  if (fs::is_directory(input)) return uwf::list_images(input);
  if (fs::is_regular_file(input) && uwf::is_image_file(input)) return {input};
  return {};
}

int cmd_train(const std::string& stage, const std::string& config_path, const std::vector<std::string>& overrides,
              const std::optional<std::string>& fred_ckpt) {
  uwf::TrainConfig cfg = uwf::TrainConfig::from_kv(uwf::read_key_values(config_path));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw uwf::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(uwf::trim(kv.substr(0, eq)), uwf::trim(kv.substr(eq + 1)));
  }
  if (const char* env = std::getenv("UWF_ENHANCE_SEED")) cfg.set("seed", env);
  if (cfg.out_dir.empty()) throw uwf::ConfigError("out_dir is not set");
  cfg.validate();

  if (stage == "fred") {
    const auto res = uwf::train_fred(cfg);
    std::cout << "fred checkpoint: " << res.checkpoint.string() << "\n";
  } else {
    std::optional<fs::path> ck;
    if (fred_ckpt) ck = *fred_ckpt;
    else if (cfg.ablation.use_fred && fs::exists(fs::path(cfg.out_dir) / "fred.ckpt")) ck = fs::path(cfg.out_dir) / "fred.ckpt";
    const auto res = uwf::train_rice(cfg, ck);
    std::cout << "rice checkpoint: " << res.checkpoint.string() << "\n";
  }
  return kOk;
}

struct EnhanceArgs {
  std::string input, output;
  std::optional<std::string> fred, rice;
  bool no_fred = false, no_rice = false, save_intermediate = false;
  int jobs = 1;
};

int cmd_enhance(const EnhanceArgs& a) {
  const auto inputs = collect_inputs(a.input);
  if (inputs.empty()) throw uwf::ConfigError("no valid images found at " + a.input);

  uwf::Ablation ablation;
  ablation.use_fred = !a.no_fred;
  ablation.use_rice = !a.no_rice;
  std::optional<uwf::Fred<float>> fred;
  std::optional<uwf::Rice<float>> rice;
  if (ablation.use_fred) {
    if (!a.fred) throw uwf::ConfigError("--fred CKPT is required unless --no-fred is given");
    fred.emplace(uwf::Fred<float>::load(*a.fred));
  }
  if (ablation.use_rice) {
    if (!a.rice) throw uwf::ConfigError("--rice CKPT is required unless --no-rice is given");
    rice.emplace(uwf::Rice<float>::load(*a.rice));
  }

  fs::create_directories(a.output);
  parallel_for(inputs.size(), a.jobs, [&](std::size_t i) {
    const auto img = uwf::load_image(inputs[i]);
    const auto res = uwf::enhance(img, fred ? &*fred : nullptr, rice ? &*rice : nullptr, ablation);
    const std::string stem = inputs[i].stem().string();
    uwf::save_image(res.enhanced, fs::path(a.output) / (stem + ".png"));
    if (a.save_intermediate) {
      uwf::save_image(res.deblurred, fs::path(a.output) / (stem + ".deblur.png"));
      uwf::save_image(res.ratio, fs::path(a.output) / (stem + ".ratio.png"));
    }
  });
  std::cout << "enhanced " << inputs.size() << " image(s) into " << a.output << "\n";
  return kOk;
}

std::vector<uwf::QualityRecord> assess_dir(const std::string& dir, int jobs) {
  const auto files = uwf::list_images(dir);
  std::vector<uwf::QualityRecord> recs(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    recs[i] = uwf::assess(uwf::load_image(files[i]), files[i].filename().string());
  });
  return recs;
}

struct Stats {
  double mean = 0, std = 0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double v : xs) s.mean += v;
  s.mean /= xs.size();
  s.std = uwf::population_std(xs);
  return s;
}

// One histogram panel per metric; dir in blue, baseline in orange.
void write_plot(const std::string& path, const std::vector<uwf::QualityRecord>& recs,
                const std::vector<uwf::QualityRecord>& base) {
  constexpr int kPanelW = 320, kPanelH = 240, kBins = 12;
  cv::Mat canvas(kPanelH, kPanelW * 3, CV_8UC3, cv::Scalar(255, 255, 255));
  const char* names[] = {"sharpness", "illum_uniformity", "entropy"};
  for (int m = 0; m < 3; ++m) {
    auto get = [m](const uwf::QualityRecord& r) {
      return m == 0 ? r.sharpness : m == 1 ? r.illum_uniformity : r.entropy;
    };
    double lo = 1e300, hi = -1e300;
    for (const auto* set : {&recs, &base})
      for (const auto& r : *set) {
        lo = std::min(lo, get(r));
        hi = std::max(hi, get(r));
      }
    if (!(hi > lo)) hi = lo + 1;
    auto hist = [&](const std::vector<uwf::QualityRecord>& rs) {
      std::vector<int> h(kBins, 0);
      for (const auto& r : rs) h[std::min(kBins - 1, static_cast<int>((get(r) - lo) / (hi - lo) * kBins))]++;
      return h;
    };
    const auto h1 = hist(recs), h2 = hist(base);
    const int peak = std::max(1, std::max(*std::max_element(h1.begin(), h1.end()),
                                          h2.empty() ? 0 : *std::max_element(h2.begin(), h2.end())));
    const int x0 = m * kPanelW + 20, y0 = kPanelH - 30, bw = (kPanelW - 40) / kBins;
    for (int b = 0; b < kBins; ++b) {
      const int hA = h1[b] * (kPanelH - 60) / peak;
      cv::rectangle(canvas, {x0 + b * bw, y0 - hA}, {x0 + b * bw + bw / 2 - 1, y0}, cv::Scalar(200, 120, 40), cv::FILLED);
      if (!base.empty()) {
        const int hB = h2[b] * (kPanelH - 60) / peak;
        cv::rectangle(canvas, {x0 + b * bw + bw / 2, y0 - hB}, {x0 + (b + 1) * bw - 1, y0}, cv::Scalar(40, 140, 240),
                      cv::FILLED);
      }
    }
    cv::line(canvas, {x0, y0}, {x0 + kBins * bw, y0}, cv::Scalar(0, 0, 0));
    cv::putText(canvas, names[m], {x0, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  }
  if (!cv::imwrite(path, canvas)) throw uwf::IoError("cannot write plot: " + path);
}

int cmd_evaluate(const std::string& dir, const std::optional<std::string>& baseline, const std::string& report,
                 const std::optional<std::string>& plot, int jobs) {
  const auto recs = assess_dir(dir, jobs);
  if (recs.empty()) throw uwf::ConfigError("no images found in " + dir);
  std::vector<uwf::QualityRecord> base;
  std::map<std::string, uwf::QualityRecord> base_by_name;
  if (baseline) {
    base = assess_dir(*baseline, jobs);
    if (base.empty()) throw uwf::ConfigError("no images found in baseline " + *baseline);
    for (const auto& r : base) base_by_name[fs::path(r.path).stem().string()] = r;
  }

  if (fs::path(report).has_parent_path()) fs::create_directories(fs::path(report).parent_path());
  std::ofstream os(report);
  if (!os) throw uwf::IoError("cannot write report: " + report);
  os.precision(10);
  os << "path,sharpness,illum_uniformity,entropy";
  if (baseline) os << ",delta_sharpness,delta_illum_uniformity,delta_entropy";
  os << "\n";
  for (const auto& r : recs) {
    os << r.path << "," << r.sharpness << "," << r.illum_uniformity << "," << r.entropy;
    if (baseline) {
      auto it = base_by_name.find(fs::path(r.path).stem().string());
      if (it != base_by_name.end())
        os << "," << r.sharpness - it->second.sharpness << "," << r.illum_uniformity - it->second.illum_uniformity << ","
           << r.entropy - it->second.entropy;
      else
        os << ",,,";
    }
    os << "\n";
  }
  std::vector<double> s, u, e;
  for (const auto& r : recs) {
    s.push_back(r.sharpness);
    u.push_back(r.illum_uniformity);
    e.push_back(r.entropy);
  }
  const Stats ss = stats_of(s), su = stats_of(u), se = stats_of(e);
  const std::string pad = baseline ? ",,," : "";
  os << "__mean__," << ss.mean << "," << su.mean << "," << se.mean << pad << "\n";
  os << "__std__," << ss.std << "," << su.std << "," << se.std << pad << "\n";

  if (plot) write_plot(*plot, recs, base);
  std::cout << "evaluated " << recs.size() << " image(s); report " << report << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-aware UWF retinal image enhancement"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one stage");
  std::string stage, config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> train_fred_ckpt;
  train->add_option("--stage", stage, "fred or rice")->required()->check(CLI::IsMember({"fred", "rice"}));
  train->add_option("--config", config_path, "key = value config file")->required();
  train->add_option("--set", overrides, "override key=value (repeatable)");
  train->add_option("--fred", train_fred_ckpt, "frozen FRED checkpoint for the rice stage");

  auto* enh = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  EnhanceArgs ea;
  enh->add_option("--input", ea.input, "image file or directory")->required();
  enh->add_option("--output", ea.output, "output directory")->required();
  enh->add_option("--fred", ea.fred, "FRED checkpoint");
  enh->add_option("--rice", ea.rice, "RICE checkpoint");
  enh->add_flag("--no-fred", ea.no_fred, "skip deblurring");
  enh->add_flag("--no-rice", ea.no_rice, "skip illumination compensation");
  enh->add_flag("--save-intermediate", ea.save_intermediate, "also write <name>.deblur.png and <name>.ratio.png");
  enh->add_option("--jobs", ea.jobs, "concurrent workers")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "Proxy no-reference quality report");
  std::string ev_dir, ev_report;
  std::optional<std::string> ev_baseline, ev_plot;
  int ev_jobs = 1;
  ev->add_option("--dir", ev_dir, "directory of images")->required();
  ev->add_option("--baseline", ev_baseline, "directory of baseline images (matched by name)");
  ev->add_option("--report", ev_report, "CSV output")->required();
  ev->add_option("--plot", ev_plot, "PNG histogram output");
  ev->add_option("--jobs", ev_jobs, "concurrent workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(stage, config_path, overrides, train_fred_ckpt);
    if (*enh) return cmd_enhance(ea);
    if (*ev) return cmd_evaluate(ev_dir, ev_baseline, ev_report, ev_plot, ev_jobs);
  } catch (const uwf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const uwf::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
