// Copyright (c) 2026 SSH-UNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "sshunet/data_io.hpp"
#include "sshunet/errors.hpp"
#include "sshunet/metrics.hpp"
#include "sshunet/ssh_layers.hpp"

namespace sshunet::cli {

namespace fs = std::filesystem;

const std::vector<KeySpec>& known_keys() {
  static const std::vector<KeySpec> keys = {
      {"run.seed", "0", "seed for initialisation, sampling and phantoms"},
      {"run.out", "runs", "output directory"},
      {"network.variant", "shift2d_multiview", "plain2d | shift2d | shift2d_multiview | full3d"},
      {"network.widths", "8,16,32", "channels per stage; the last stage is the bottleneck"},
      {"network.shift_fraction", "1/4", "per-direction proportion of shifted channels"},
      {"network.placement", "pre_conv", "pre_conv | between_convs"},
      {"network.in_channels", "1", "input channels"},
      {"network.num_classes", "3", "classes including background"},
      {"optim.kind", "adamw", "sgd | adamw"},
      {"optim.lr", "0.003", "peak learning rate"},
      {"optim.momentum", "0.99", "SGD momentum"},
      {"optim.beta1", "0.9", "AdamW beta1"},
      {"optim.beta2", "0.999", "AdamW beta2"},
      {"optim.weight_decay", "1e-05", "AdamW decoupled weight decay"},
      {"optim.warmup", "50", "linear warmup iterations (capped at train.steps)"},
      {"train.steps", "300", "optimizer steps"},
      {"train.batch", "2", "patches per step"},
      {"train.patch", "16", "isotropic patch extent"},
      {"train.fg_bias", "0.5", "probability of centring a patch on foreground"},
      {"train.val_every", "50", "validation interval in steps; 0 disables"},
      {"train.overlap", "0.5", "sliding-window overlap fraction"},
      {"train.augment", "true", "random flip, rotation, intensity scale and shift"},
      {"data.source", "phantom", "phantom | files"},
      {"data.extent", "16", "phantom volume extent"},
      {"data.train_count", "8", "training phantoms"},
      {"data.val_count", "4", "validation phantoms"},
      {"data.seed", "auto", "phantom seed; auto follows run.seed"},
      {"data.train_files", "", "image[:labels] paths (.sshv, .nii, .hdr)"},
      {"data.val_files", "", "image[:labels] paths (.sshv, .nii, .hdr)"},
      {"data.window_lo", "-175", "intensity window lower bound for file data"},
      {"data.window_hi", "250", "intensity window upper bound for file data"},
      {"eval.checkpoint", "", "parameter file to evaluate"},
      {"eval.prediction", "", "label files scored instead of running a network"},
      {"eval.split", "val", "val | train"},
      {"eval.tau", "1", "NSD tolerance in mm"},
      {"profile.input", "1,128,128,128", "input shape [C,X,Y,Z] or [B,C,X,Y,Z]"},
      {"profile.variants", "plain2d,shift2d,shift2d_multiview,full3d", "variants to profile"},
      {"profile.dsc", "", "optional Dice per variant for the efficiency table"},
      {"sweep.fractions", "1/2,1/4,1/8,1/16,0", "shift fractions to train"},
      {"sweep.variant", "shift2d", "shift2d | shift2d_multiview"},
      {"sweep.parallel", "false", "train the fractions concurrently"},
      {"demo.length", "16", "sequence length"},
      {"demo.weights", "0.25,0.5,-0.75", "three conv taps"},
      {"demo.trials", "0", "extra random trials"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ShiftPlacement parse_placement(const std::string& s) {
  if (s == "pre_conv") return ShiftPlacement::kPreConv;
  if (s == "between_convs") return ShiftPlacement::kBetweenConvs;
  throw ConfigError("unknown placement '" + s + "' (valid: pre_conv, between_convs)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

void prepare_out(const RunConfig& cfg, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  write_text(out / "config.ini", cfg.to_ini());
}

// "image[:labels]"
VolumeRecord load_volume(const std::string& spec, float lo, float hi) {
  const auto colon = spec.find(':');
  const fs::path image = spec.substr(0, colon);
  VolumeRecord rec;
  if (image.extension() == ".sshv") {
    rec = read_sshv(image);
    if (colon != std::string::npos) rec.labels.labels = read_sshv(spec.substr(colon + 1)).labels.labels;
  } else {
    std::optional<fs::path> labels;
    if (colon != std::string::npos) labels = fs::path(spec.substr(colon + 1));
    rec = parse_nifti1(image, labels);
  }
  rec.intensity = hu_window(rec.intensity, lo, hi);
  return rec;
}

LabelVolume load_labels(const fs::path& path) {
  if (path.extension() == ".sshv") return read_sshv(path).labels;
  const auto img = read_nifti1(path);
  auto out = LabelVolume::zeros(img.shape(), img.spacing());
  for (std::size_t i = 0; i < img.voxels.size(); ++i) out.labels[i] = static_cast<std::int32_t>(std::lround(img.voxels[i]));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t pos = 0;
    const auto out = std::stoll(v, &pos);
    if (pos == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " must be an integer, got '" + v + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t pos = 0;
    const auto out = std::stod(v, &pos);
    if (pos == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " must be a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + " must be true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const { return split_list(get(key)); }

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const auto key = item.fullname();
    if (!values_.count(key)) throw ConfigError(origin + ": unknown config key '" + key + "'");
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    set(key, value);
  }
}

void RunConfig::load_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  load_text(ss.str(), path.string());
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  std::string section;
  for (const auto& k : known_keys()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    os << k.name.substr(dot + 1) << " = \"" << get(k.name) << "\"\n";
  }
  return os.str();
}

UNetConfig RunConfig::network() const {
  UNetConfig c;
  c.variant = parse_variant(get("network.variant"));
  c.stage_widths.clear();
  for (const auto& w : get_list("network.widths")) {
    try {
      c.stage_widths.push_back(std::stoi(w));
    } catch (const std::exception&) {
      throw ConfigError("network.widths entries must be integers, got '" + w + "'");
    }
  }
  try {
    c.shift_fraction = Fraction::parse(get("network.shift_fraction"));
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("network.shift_fraction: ") + e.what());
  }
  c.placement = parse_placement(get("network.placement"));
  c.in_channels = static_cast<int>(get_int("network.in_channels"));
  c.num_classes = static_cast<int>(get_int("network.num_classes"));
  c.patch_extent = static_cast<int>(get_int("train.patch"));
  c.validate();
  return c;
}

OptimConfig RunConfig::optim() const {
  OptimConfig o;
  o.kind = parse_optim(get("optim.kind"));
  o.lr = get_double("optim.lr");
  o.momentum = get_double("optim.momentum");
  o.beta1 = get_double("optim.beta1");
  o.beta2 = get_double("optim.beta2");
  o.weight_decay = get_double("optim.weight_decay");
  o.total_iters = std::max<std::int64_t>(1, get_int("train.steps"));
  o.warmup_iters = std::min(get_int("optim.warmup"), o.total_iters);
  o.validate();
  return o;
}

LoopConfig RunConfig::loop(std::uint64_t seed) const {
  LoopConfig l;
  l.steps = get_int("train.steps");
  l.batch = get_int("train.batch");
  l.patch = get_int("train.patch");
  l.fg_bias = get_double("train.fg_bias");
  l.val_every = get_int("train.val_every");
  l.overlap = get_double("train.overlap");
  l.augment = get_bool("train.augment") ? AugmentConfig{} : AugmentConfig::none();
  l.seed = seed;
  const auto v = l.violations();
  if (!v.empty()) throw ConfigError("invalid train section: " + v.front());
  return l;
}

Dataset RunConfig::dataset(std::uint64_t seed) const {
  const auto source = get("data.source");
  if (source == "phantom") {
    const auto& ds = get("data.seed");
    const std::uint64_t data_seed = ds == "auto" ? seed : static_cast<std::uint64_t>(get_int("data.seed"));
    return phantom_dataset(get_int("data.train_count"), get_int("data.val_count"), get_int("data.extent"), data_seed);
  }
  if (source != "files") throw ConfigError("unknown data.source '" + source + "' (valid: phantom, files)");
  const auto lo = static_cast<float>(get_double("data.window_lo"));
  const auto hi = static_cast<float>(get_double("data.window_hi"));
  if (!(lo < hi)) throw ConfigError("data.window_lo must be below data.window_hi");
  Dataset d;
  for (const auto& f : get_list("data.train_files")) d.train.push_back(load_volume(f, lo, hi));
  for (const auto& f : get_list("data.val_files")) d.val.push_back(load_volume(f, lo, hi));
  return d;
}

// ---------------------------------------------------------------- commands

namespace {

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::ostream& os;
};

void save_best(SSHUNet& net, const TrainState& st, const fs::path& path) {
  auto& entries = net.params().entries();
  std::vector<std::vector<float>> current;
  for (auto& [name, t] : entries) current.emplace_back(t.data().begin(), t.data().end());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto d = entries[i].second.mutable_data();
    std::copy(st.best_params[i].begin(), st.best_params[i].end(), d.begin());
  }
  save_params(net, path);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto d = entries[i].second.mutable_data();
    std::copy(current[i].begin(), current[i].end(), d.begin());
  }
}

struct TrainOutcome {
  TrainResult result;
  double final_val = 0.0;
  bool has_val = false;
};

TrainOutcome train_to(const RunConfig& cfg, std::uint64_t seed, const fs::path& out, std::ostream* log) {
  const auto net_cfg = cfg.network();
  const auto optim = cfg.optim();
  const auto loop = cfg.loop(seed);
  const auto data = cfg.dataset(seed);
  if (data.train.empty()) throw ConfigError("no training volumes (data.train_files is empty)");
  auto net = SSHUNet::build(net_cfg, seed);
  TrainOutcome o;
  o.result = train(net, data, optim, loop, [&](const HistoryRow& r) {
    if (log && (r.val_dice || r.step % 50 == 0)) {
      *log << "step " << r.step << " loss " << fmt(r.loss) << " lr " << fmt(r.lr);
      if (r.val_dice) *log << " val_dice " << fmt(*r.val_dice);
      *log << "\n";
    }
  });
  std::ostringstream csv;
  write_history_csv(csv, o.result.history);
  write_text(out / "history.csv", csv.str());
  save_params(net, out / "model.sshu");
  if (!o.result.state.best_params.empty()) save_best(net, o.result.state, out / "best.sshu");
  for (auto it = o.result.history.rbegin(); it != o.result.history.rend(); ++it) {
    if (it->val_dice) {
      o.final_val = *it->val_dice;
      o.has_val = true;
      break;
    }
  }
  return o;
}

int cmd_train(Context& c) {
  prepare_out(c.cfg, c.out);
  const auto o = train_to(c.cfg, c.seed, c.out, &c.os);
  c.os << "wrote " << (c.out / "history.csv").string() << " and " << (c.out / "model.sshu").string() << "\n";
  if (o.has_val) c.os << "final val_dice " << fmt(o.final_val) << "\n";
  return kExitOk;
}

int cmd_eval(Context& c) {
  prepare_out(c.cfg, c.out);
  const auto data = c.cfg.dataset(c.seed);
  const auto split = c.cfg.get("eval.split");
  if (split != "val" && split != "train") throw ConfigError("eval.split must be val or train");
  const auto& volumes = split == "val" ? data.val : data.train;
  if (volumes.empty()) throw ConfigError("no volumes in the " + split + " split");
  const int K = static_cast<int>(c.cfg.get_int("network.num_classes"));
  const double tau = c.cfg.get_double("eval.tau");

  std::vector<LabelVolume> preds;
  const auto prediction = c.cfg.get_list("eval.prediction");
  if (!prediction.empty()) {
    if (prediction.size() != volumes.size()) {
      throw ConfigError("eval.prediction lists " + std::to_string(prediction.size()) + " files for " +
                        std::to_string(volumes.size()) + " volumes");
    }
    for (std::size_t i = 0; i < prediction.size(); ++i) {
      preds.push_back(load_labels(prediction[i]));
      if (preds.back().shape != volumes[i].labels.shape) {
        throw FormatError("prediction '" + prediction[i] + "' differs in shape from its volume");
      }
    }
  } else {
    const auto ckpt = c.cfg.get("eval.checkpoint");
    if (ckpt.empty()) throw ConfigError("eval needs --checkpoint or --prediction");
    if (!fs::exists(ckpt)) throw IoError("checkpoint '" + ckpt + "' does not exist");
    auto net = SSHUNet::build(c.cfg.network(), c.seed);
    load_params(net, ckpt);
    const auto patch = c.cfg.get_int("train.patch");
    const auto overlap = c.cfg.get_double("train.overlap");
    for (const auto& v : volumes) preds.push_back(sliding_window_infer(net, v, patch, overlap));
  }

  std::ostringstream csv;
  csv << "case,class,dice,nsd,gt_voxels,pred_voxels,present\n";
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    reports.push_back(evaluate_case(volumes[i].labels, preds[i], K, tau));
    for (const auto& m : reports.back().classes) {
      csv << volumes[i].id << ',' << m.cls << ',' << fmt(m.dice) << ',' << fmt(m.nsd) << ',' << m.gt_voxels << ','
          << m.pred_voxels << ',' << (m.present ? 1 : 0) << '\n';
    }
  }
  const auto agg = aggregate(reports);
  for (const auto& m : agg.classes) {
    csv << "mean," << m.cls << ',' << fmt(m.dice) << ',' << fmt(m.nsd) << ",,," << (m.present ? 1 : 0) << '\n';
  }
  csv << "mean,all," << (agg.mean_dice ? fmt(*agg.mean_dice) : "") << ','
      << (agg.mean_nsd ? fmt(*agg.mean_nsd) : "") << ",,,\n";
  write_text(c.out / "metrics.csv", csv.str());
  c.os << "class,dice,nsd\n";
  for (const auto& m : agg.classes) c.os << m.cls << ',' << fmt(m.dice) << ',' << fmt(m.nsd) << '\n';
  if (agg.mean_dice) c.os << "mean," << fmt(*agg.mean_dice) << ',' << fmt(*agg.mean_nsd) << '\n';
  return kExitOk;
}

int cmd_profile(Context& c) {
  prepare_out(c.cfg, c.out);
  Shape input;
  for (const auto& d : c.cfg.get_list("profile.input")) {
    try {
      input.push_back(std::stoll(d));
    } catch (const std::exception&) {
      throw ConfigError("profile.input entries must be integers, got '" + d + "'");
    }
  }
  if (input.size() != 4 && input.size() != 5) throw ConfigError("profile.input must be [C,X,Y,Z] or [B,C,X,Y,Z]");
  const auto variants = c.cfg.get_list("profile.variants");
  const auto dsc = c.cfg.get_list("profile.dsc");
  if (!dsc.empty() && dsc.size() != variants.size()) throw ConfigError("profile.dsc needs one value per variant");
  auto base = c.cfg;
  base.set("train.patch", std::to_string(input[input.size() - 3]));
  std::vector<NamedConfig> named;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    auto cfg = base;
    cfg.set("network.variant", variants[i]);
    NamedConfig n{variants[i], cfg.network(), std::nullopt};
    if (!dsc.empty()) n.dsc = std::stod(dsc[i]);
    write_text(c.out / ("cost_" + variants[i] + ".csv"), count_flops(n.cfg, input).to_csv());
    named.push_back(n);
  }
  const auto table = efficiency_csv(efficiency_table(named, input));
  write_text(c.out / "efficiency.csv", table);
  c.os << table;
  return kExitOk;
}

int cmd_sweep(Context& c) {
  prepare_out(c.cfg, c.out);
  const auto fractions = c.cfg.get_list("sweep.fractions");
  if (fractions.empty()) throw ConfigError("sweep.fractions is empty");
  std::vector<RunConfig> cfgs;
  std::vector<fs::path> dirs;
  for (const auto& f : fractions) {
    auto cfg = c.cfg;
    cfg.set("network.variant", cfg.get("sweep.variant"));
    cfg.set("network.shift_fraction", f);
    cfg.network();
    std::string tag = f;
    std::replace(tag.begin(), tag.end(), '/', '_');
    dirs.push_back(c.out / ("fraction_" + tag));
    prepare_out(cfg, dirs.back());
    cfgs.push_back(cfg);
  }
  std::vector<TrainOutcome> outcomes(cfgs.size());
  if (c.cfg.get_bool("sweep.parallel")) {
    std::vector<std::exception_ptr> errors(cfgs.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          outcomes[i] = train_to(cfgs[i], c.seed, dirs[i], nullptr);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      c.os << "fraction " << fractions[i] << "\n";
      outcomes[i] = train_to(cfgs[i], c.seed, dirs[i], nullptr);
    }
  }
  std::ostringstream csv;
  csv << "fraction,val_dice,final_loss\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto& h = outcomes[i].result.history;
    csv << fractions[i] << ',' << (outcomes[i].has_val ? fmt(outcomes[i].final_val) : "") << ','
        << (h.empty() ? "" : fmt(h.back().loss)) << '\n';
  }
  write_text(c.out / "sweep.csv", csv.str());
  c.os << csv.str();
  return kExitOk;
}

int cmd_shift_demo(Context& c) {
  const auto length = c.cfg.get_int("demo.length");
  if (length < 1) throw ConfigError("demo.length must be positive");
  const auto wl = c.cfg.get_list("demo.weights");
  if (wl.size() != 3) throw ConfigError("demo.weights needs exactly three taps");
  std::array<float, 3> w{};
  for (int i = 0; i < 3; ++i) {
    try {
      w[i] = std::stof(wl[i]);
    } catch (const std::exception&) {
      throw ConfigError("demo.weights entries must be numbers, got '" + wl[i] + "'");
    }
  }
  const auto trials = c.cfg.get_int("demo.trials");
  if (trials < 0) throw ConfigError("demo.trials must be non-negative");
  Rng rng(c.seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> x(static_cast<std::size_t>(length));
  for (auto& v : x) v = u(rng);
  const auto r = shift_mac_equivalence(x, w);
  constexpr double kTol = 1e-6;
  c.os << "taps w = (" << w[0] << ", " << w[1] << ", " << w[2] << "), zero padding\n";
  c.os << "direct:     y[i] = w0 x[i-1] + w1 x[i] + w2 x[i+1]\n";
  c.os << "decomposed: y = w0 shift(x, +1) + w1 x + w2 shift(x, -1)\n";
  c.os << std::setw(4) << "i" << std::setw(14) << "x" << std::setw(14) << "direct" << std::setw(14) << "decomposed"
       << "\n";
  double identity_gap = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.os << std::setw(4) << i << std::setw(14) << fmt(x[i]) << std::setw(14) << fmt(r.direct[i]) << std::setw(14)
         << fmt(r.decomposed[i]) << "\n";
    identity_gap = std::max(identity_gap, std::fabs(r.direct[i] - x[i]));
  }
  bool ok = r.max_abs_diff <= kTol;
  c.os << "verdict: " << (ok ? "equal" : "NOT equal") << " (max |direct - decomposed| = " << fmt(r.max_abs_diff)
       << ")\n";
  if (identity_gap <= kTol) c.os << "output equals input: identity\n";
  if (trials > 0) {
    double worst = 0.0;
    std::uniform_int_distribution<int> len(3, 64);
    for (std::int64_t t = 0; t < trials; ++t) {
      std::vector<float> xt(static_cast<std::size_t>(len(rng)));
      for (auto& v : xt) v = u(rng);
      const std::array<float, 3> wt{u(rng), u(rng), u(rng)};
      worst = std::max(worst, shift_mac_equivalence(xt, wt).max_abs_diff);
    }
    const bool all = worst <= kTol;
    ok = ok && all;
    c.os << "random trials: " << trials << ", all equal within 1e-6: " << (all ? "yes" : "no")
         << " (max |diff| = " << fmt(worst) << ")\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Slice-shift UNet desk toolkit", "sshunet");
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_path, seed_text, out_text;
  app.add_option("--config", config_path, "INI config file with [section] key = value entries");
  app.add_option("--seed", seed_text, "seed (run.seed)");
  app.add_option("--out", out_text, "output directory (run.out)");
  std::map<std::string, std::string> overrides;
  std::vector<std::pair<std::string, CLI::Option*>> dotted;
  std::vector<std::unique_ptr<std::string>> storage;
  for (const auto& k : known_keys()) {
    storage.push_back(std::make_unique<std::string>());
    dotted.emplace_back(k.name, app.add_option("--" + k.name, *storage.back(), k.help)->group("Config keys"));
  }
  struct Alias {
    const char* flag;
    const char* key;
    const char* help;
  };
  auto add_aliases = [&](CLI::App* sub, std::initializer_list<Alias> aliases) {
    for (const auto& a : aliases) {
      storage.push_back(std::make_unique<std::string>());
      dotted.emplace_back(a.key, sub->add_option(a.flag, *storage.back(), a.help));
    }
  };
  auto* train_cmd = app.add_subcommand("train", "train a network and write history.csv and model.sshu");
  auto* eval_cmd = app.add_subcommand("eval", "per-case, per-class Dice and NSD");
  add_aliases(eval_cmd, {{"--checkpoint", "eval.checkpoint", "parameter file"},
                         {"--prediction", "eval.prediction", "label files to score instead of a network"},
                         {"--split", "eval.split", "val | train"}});
  auto* profile_cmd = app.add_subcommand("profile", "parameter and FLOP counts per variant");
  add_aliases(profile_cmd, {{"--input", "profile.input", "input shape"}, {"--variants", "profile.variants", "variants"}});
  auto* sweep_cmd = app.add_subcommand("sweep-shift", "validation Dice against shift fraction");
  add_aliases(sweep_cmd, {{"--fractions", "sweep.fractions", "fractions, e.g. 1/2,1/4,0"}});
  bool parallel = false;
  sweep_cmd->add_flag("--parallel", parallel, "train the fractions concurrently");
  auto* demo_cmd = app.add_subcommand("shift-demo", "direct conv against shift + multiply-accumulate");
  add_aliases(demo_cmd, {{"--length", "demo.length", "sequence length"},
                         {"--weights", "demo.weights", "three taps"},
                         {"--trials", "demo.trials", "random trials"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [key, opt] : dotted) {
      if (opt->count() > 0) cfg.set(key, opt->as<std::string>());
    }
    if (!seed_text.empty()) cfg.set("run.seed", seed_text);
    if (!out_text.empty()) cfg.set("run.out", out_text);
    if (parallel) cfg.set("sweep.parallel", "true");
    const auto seed_value = cfg.get_int("run.seed");
    if (seed_value < 0) throw ConfigError("run.seed must be non-negative");
    Context ctx{cfg, static_cast<std::uint64_t>(seed_value), fs::path(cfg.get("run.out")), out};
    if (*train_cmd) return cmd_train(ctx);
    if (*eval_cmd) return cmd_eval(ctx);
    if (*profile_cmd) return cmd_profile(ctx);
    if (*sweep_cmd) return cmd_sweep(ctx);
    if (*demo_cmd) return cmd_shift_demo(ctx);
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "aborted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const UnsupportedError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sshunet::cli
