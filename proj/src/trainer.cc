/*
 * Copyright 2026 The parvoc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "parvoc/trainer.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "parvoc/features.h"
#include "parvoc/quantize.h"
#include "parvoc/wav_io.h"

namespace parvoc {
namespace fs = std::filesystem;

// --- Adam ------------------------------------------------------------------

void Adam::Register(const std::string& name, const ParamPtr& p) {
  if (!p) throw Error("Adam: null parameter " + name);
  for (const Slot& s : slots_) {
    if (s.name == name) throw Error("Adam: duplicate parameter " + name);
  }
  Slot s;
  s.name = name;
  s.param = p;
  s.m = Tensor(p->shape);
  s.v = Tensor(p->shape);
  slots_.push_back(std::move(s));
}

void Adam::Step(const Tape& tape, const Binder& bind) {
  ++step_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (Slot& s : slots_) {
    const int node = bind.NodeOf(s.param);
    if (node < 0) continue;
    const Tensor* g = tape.Grad(node);
    if (g == nullptr) continue;
    CheckSameShape(*g, *s.param, "Adam::Step");
    float* p = s.param->Ptr();
    float* m = s.m.Ptr();
    float* v = s.v.Ptr();
    const int64_t n = s.param->Numel();
    for (int64_t i = 0; i < n; ++i) {
      const double gi = g->data[i];
      if (!std::isfinite(gi)) {
        throw Error("Adam: non-finite gradient in " + s.name +
                    " at optimizer step " + std::to_string(step_));
      }
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] -= static_cast<float>(cfg_.lr * (mi / bc1) /
                                 (std::sqrt(vi / bc2) + cfg_.eps));
    }
  }
}

void Adam::LoadMoments(const std::string& name, const Tensor& m,
                       const Tensor& v) {
  for (Slot& s : slots_) {
    if (s.name != name) continue;
    CheckSameShape(m, *s.param, "Adam::LoadMoments");
    CheckSameShape(v, *s.param, "Adam::LoadMoments");
    s.m = m;
    s.v = v;
    return;
  }
  throw Error("Adam: moments for unknown parameter " + name);
}

// --- Checkpoint serialization ----------------------------------------------

namespace {

constexpr char kCkMagic[4] = {'P', 'V', 'C', 'K'};
constexpr uint32_t kCkVersion = 1;

void PutU32(std::string& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.append(b, 4);
}

uint32_t GetU32(const std::string& in, size_t& pos) {
  if (pos + 4 > in.size()) throw Error("checkpoint: truncated file");
  const auto* b = reinterpret_cast<const unsigned char*>(in.data() + pos);
  pos += 4;
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

std::string GetBytes(const std::string& in, size_t& pos, size_t n) {
  if (pos + n > in.size()) throw Error("checkpoint: truncated file");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

void PutRecord(std::string& out, const std::string& name, const Tensor& t) {
  PutU32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  PutU32(out, static_cast<uint32_t>(t.Rank()));
  for (int d : t.shape) PutU32(out, static_cast<uint32_t>(d));
  // Raw IEEE float bytes; this code targets little-endian hosts and the
  // format is defined as little endian, so a straight copy is exact.
  const size_t bytes = sizeof(float) * static_cast<size_t>(t.Numel());
  const size_t off = out.size();
  out.resize(off + bytes);
  std::memcpy(out.data() + off, t.Ptr(), bytes);
}

std::pair<std::string, Tensor> GetRecord(const std::string& in, size_t& pos) {
  const uint32_t name_len = GetU32(in, pos);
  if (name_len > 4096) throw Error("checkpoint: implausible record name");
  std::string name = GetBytes(in, pos, name_len);
  const uint32_t rank = GetU32(in, pos);
  if (rank > 8) throw Error("checkpoint: implausible tensor rank");
  std::vector<int> shape(rank);
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = GetU32(in, pos);
    if (d == 0 || d > (1u << 28)) {
      throw Error("checkpoint: implausible dimension in " + name);
    }
    shape[i] = static_cast<int>(d);
    numel *= d;
  }
  if (numel > (int64_t{1} << 31)) {
    throw Error("checkpoint: implausible tensor size in " + name);
  }
  Tensor t(shape);
  const size_t bytes = sizeof(float) * static_cast<size_t>(numel);
  if (pos + bytes > in.size()) throw Error("checkpoint: truncated file");
  std::memcpy(t.Ptr(), in.data() + pos, bytes);
  pos += bytes;
  return {std::move(name), std::move(t)};
}

std::string JoinCsv(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> SplitCsv(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw Error("checkpoint: bad integer list '" + s + "'");
    out.push_back(std::stoi(item));
  }
  return out;
}

// Everything that defines the trained function, for compatibility checks.
std::string ArchFingerprint(const ModelConfig& m, FarOrder order,
                            int bar_depth) {
  std::ostringstream os;
  os << m.sample_rate << '|' << m.n_bands << '|' << m.n_mels << '|'
     << m.cond_ch << '|' << m.residual_ch << '|' << m.hidden_ch << '|'
     << m.wn_layers << '|' << m.max_dilation << '|' << m.kernel << '|'
     << m.bit_kernel << '|' << m.n_bit_blocks << '|' << m.n_classes << '|'
     << JoinCsv(m.upsample) << '|' << m.group << '|'
     << (order == FarOrder::kHighToLow ? "high" : "low") << '|' << bar_depth;
  return os.str();
}

// Fixed line order so that save -> load -> save is byte identical.
std::string SerializeCkConfig(const Checkpoint& ck) {
  const ModelConfig& m = ck.model;
  std::ostringstream os;
  os << "sample_rate=" << m.sample_rate << "\n"
     << "n_bands=" << m.n_bands << "\n"
     << "n_mels=" << m.n_mels << "\n"
     << "cond_ch=" << m.cond_ch << "\n"
     << "residual_ch=" << m.residual_ch << "\n"
     << "hidden_ch=" << m.hidden_ch << "\n"
     << "wn_layers=" << m.wn_layers << "\n"
     << "max_dilation=" << m.max_dilation << "\n"
     << "kernel=" << m.kernel << "\n"
     << "bit_kernel=" << m.bit_kernel << "\n"
     << "n_bit_blocks=" << m.n_bit_blocks << "\n"
     << "n_classes=" << m.n_classes << "\n"
     << "upsample=" << JoinCsv(m.upsample) << "\n"
     << "group=" << m.group << "\n"
     << "far_order=" << (ck.far_order == FarOrder::kHighToLow ? "high" : "low")
     << "\n"
     << "bar_depth=" << ck.bar_depth << "\n"
     << "step=" << ck.step << "\n"
     << "adam_step=" << ck.adam_step << "\n"
     << "has_pf=" << (ck.has_pf ? 1 : 0) << "\n"
     << "has_adam=" << (ck.has_adam ? 1 : 0) << "\n"
     << "rng=" << ck.rng_state << "\n"
     << "rng2=" << ck.rng_state2 << "\n";
  return os.str();
}

int64_t ParseI64(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    const int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw Error("checkpoint: bad integer '" + v + "' for " + key);
  }
}

void ParseCkConfig(const std::string& text, Checkpoint& ck) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("checkpoint: malformed config line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    ModelConfig& m = ck.model;
    if (key == "sample_rate") m.sample_rate = static_cast<int>(ParseI64(val, key));
    else if (key == "n_bands") m.n_bands = static_cast<int>(ParseI64(val, key));
    else if (key == "n_mels") m.n_mels = static_cast<int>(ParseI64(val, key));
    else if (key == "cond_ch") m.cond_ch = static_cast<int>(ParseI64(val, key));
    else if (key == "residual_ch") m.residual_ch = static_cast<int>(ParseI64(val, key));
    else if (key == "hidden_ch") m.hidden_ch = static_cast<int>(ParseI64(val, key));
    else if (key == "wn_layers") m.wn_layers = static_cast<int>(ParseI64(val, key));
    else if (key == "max_dilation") m.max_dilation = static_cast<int>(ParseI64(val, key));
    else if (key == "kernel") m.kernel = static_cast<int>(ParseI64(val, key));
    else if (key == "bit_kernel") m.bit_kernel = static_cast<int>(ParseI64(val, key));
    else if (key == "n_bit_blocks") m.n_bit_blocks = static_cast<int>(ParseI64(val, key));
    else if (key == "n_classes") m.n_classes = static_cast<int>(ParseI64(val, key));
    else if (key == "upsample") m.upsample = SplitCsv(val);
    else if (key == "group") m.group = static_cast<int>(ParseI64(val, key));
    else if (key == "far_order") {
      if (val == "high") ck.far_order = FarOrder::kHighToLow;
      else if (val == "low") ck.far_order = FarOrder::kLowToHigh;
      else throw Error("checkpoint: bad far_order '" + val + "'");
    } else if (key == "bar_depth") ck.bar_depth = static_cast<int>(ParseI64(val, key));
    else if (key == "step") ck.step = ParseI64(val, key);
    else if (key == "adam_step") ck.adam_step = ParseI64(val, key);
    else if (key == "has_pf") ck.has_pf = ParseI64(val, key) != 0;
    else if (key == "has_adam") ck.has_adam = ParseI64(val, key) != 0;
    else if (key == "rng") ck.rng_state = val;
    else if (key == "rng2") ck.rng_state2 = val;
    else throw Error("checkpoint: unknown config key '" + key +
                     "' (incompatible version?)");
  }
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Checkpoint& ck) {
  std::string out;
  out.append(kCkMagic, 4);
  PutU32(out, kCkVersion);
  const std::string cfg = SerializeCkConfig(ck);
  PutU32(out, static_cast<uint32_t>(cfg.size()));
  out.append(cfg);

  std::vector<std::pair<std::string, const Tensor*>> records;
  ck.net.Visit("net/", [&records](const std::string& name, const ParamPtr& p) {
    records.emplace_back(name, p.get());
  });
  if (ck.has_pf) {
    ck.pf.Visit("pf/", [&records](const std::string& name, const ParamPtr& p) {
      records.emplace_back(name, p.get());
    });
  }
  if (ck.has_adam) {
    for (const auto& [name, t] : ck.adam_m) {
      records.emplace_back("adam.m/" + name, &t);
    }
    for (const auto& [name, t] : ck.adam_v) {
      records.emplace_back("adam.v/" + name, &t);
    }
  }
  PutU32(out, static_cast<uint32_t>(records.size()));
  for (const auto& [name, t] : records) PutRecord(out, name, *t);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("SaveCheckpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw Error("SaveCheckpoint: write failed for " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("LoadCheckpoint: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string in = buf.str();

  size_t pos = 0;
  if (GetBytes(in, pos, 4) != std::string(kCkMagic, 4)) {
    throw Error("LoadCheckpoint: " + path + " is not a checkpoint file");
  }
  const uint32_t version = GetU32(in, pos);
  if (version != kCkVersion) {
    throw Error("LoadCheckpoint: unsupported checkpoint version " +
                std::to_string(version));
  }
  Checkpoint ck;
  const uint32_t cfg_len = GetU32(in, pos);
  ParseCkConfig(GetBytes(in, pos, cfg_len), ck);
  ck.model.Validate();

  // Allocate parameter storage with the right shapes, then overwrite every
  // tensor from the records.
  RandomSource scratch_rng(0);
  ck.net = InitFarBarNet(ck.model, scratch_rng);
  if (ck.has_pf) ck.pf = InitPostFilter(ck.model, scratch_rng);

  std::unordered_map<std::string, ParamPtr> slots;
  ck.net.Visit("net/", [&slots](const std::string& name, const ParamPtr& p) {
    slots.emplace(name, p);
  });
  if (ck.has_pf) {
    ck.pf.Visit("pf/", [&slots](const std::string& name, const ParamPtr& p) {
      slots.emplace(name, p);
    });
  }

  std::unordered_map<std::string, int> filled;
  const uint32_t n_records = GetU32(in, pos);
  for (uint32_t i = 0; i < n_records; ++i) {
    auto [name, t] = GetRecord(in, pos);
    if (name.rfind("adam.m/", 0) == 0) {
      if (!ck.has_adam) throw Error("LoadCheckpoint: stray optimizer record");
      ck.adam_m.emplace_back(name.substr(7), std::move(t));
      continue;
    }
    if (name.rfind("adam.v/", 0) == 0) {
      if (!ck.has_adam) throw Error("LoadCheckpoint: stray optimizer record");
      ck.adam_v.emplace_back(name.substr(7), std::move(t));
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw Error("LoadCheckpoint: unexpected record '" + name + "'");
    }
    CheckSameShape(t, *it->second, "LoadCheckpoint");
    *it->second = std::move(t);
    ++filled[name];
  }
  if (pos != in.size()) throw Error("LoadCheckpoint: trailing bytes");
  for (const auto& [name, p] : slots) {
    if (filled[name] != 1) {
      throw Error("LoadCheckpoint: record '" + name + "' appears " +
                  std::to_string(filled[name]) + " times");
    }
  }
  return ck;
}

// --- TrainConfig -----------------------------------------------------------

void TrainConfig::Validate() const {
  if (data_dir.empty()) throw Error("TrainConfig: data_dir is required");
  if (batch < 1) throw Error("TrainConfig: batch must be >= 1");
  if (steps < 1) throw Error("TrainConfig: steps must be >= 1");
  if (checkpoint_every < 1 || log_every < 1) {
    throw Error("TrainConfig: intervals must be >= 1");
  }
  if (!(lr > 0.0f)) throw Error("TrainConfig: lr must be positive");
  if (sample_rate < 8000) throw Error("TrainConfig: implausible sample rate");
  const ModelConfig mc = ToModelConfig();
  mc.Validate();
  const int hop = mc.UpsampleProduct() * mc.n_bands;
  if (segment < hop || segment % hop != 0) {
    throw Error("TrainConfig: segment must be a positive multiple of the "
                "feature hop (" +
                std::to_string(hop) + " samples)");
  }
  if ((segment / mc.n_bands) % mc.group != 0) {
    throw Error("TrainConfig: subband segment length " +
                std::to_string(segment / mc.n_bands) +
                " is not divisible by group " + std::to_string(mc.group));
  }
  if (bar_depth != 0 && bar_depth != 2 && bar_depth != 3) {
    throw Error("TrainConfig: bar_depth must be 0, 2, or 3");
  }
}

ModelConfig TrainConfig::ToModelConfig() const {
  ModelConfig mc;
  mc.sample_rate = sample_rate;
  mc.group = group;
  mc.residual_ch = residual_ch;
  mc.hidden_ch = hidden_ch;
  mc.cond_ch = cond_ch;
  mc.wn_layers = wn_layers;
  mc.max_dilation = max_dilation;
  return mc;
}

namespace {

std::string Trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig ParseTrainConfigText(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) +
                  ": expected key=value, got '" + line + "'");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string val = Trim(line.substr(eq + 1));
    auto as_int = [&](int lo) {
      const int64_t v = ParseI64(val, key);
      if (v < lo) {
        throw Error("config line " + std::to_string(lineno) + ": " + key +
                    " must be >= " + std::to_string(lo));
      }
      return static_cast<int>(v);
    };
    if (key == "data_dir") cfg.data_dir = val;
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "init_checkpoint") cfg.init_checkpoint = val;
    else if (key == "sample_rate") cfg.sample_rate = as_int(1);
    else if (key == "batch") cfg.batch = as_int(1);
    else if (key == "segment") cfg.segment = as_int(1);
    else if (key == "steps") cfg.steps = as_int(1);
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_int(1);
    else if (key == "log_every") cfg.log_every = as_int(1);
    else if (key == "lr") {
      try {
        cfg.lr = std::stof(val);
      } catch (const std::exception&) {
        throw Error("config line " + std::to_string(lineno) + ": bad lr");
      }
    } else if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(ParseI64(val, key));
    } else if (key == "group") cfg.group = as_int(1);
    else if (key == "bar_depth") cfg.bar_depth = as_int(0);
    else if (key == "far_order") {
      if (val == "high") cfg.far_order = FarOrder::kHighToLow;
      else if (val == "low") cfg.far_order = FarOrder::kLowToHigh;
      else throw Error("config line " + std::to_string(lineno) +
                       ": far_order must be 'high' or 'low'");
    } else if (key == "residual_ch") cfg.residual_ch = as_int(2);
    else if (key == "hidden_ch") cfg.hidden_ch = as_int(1);
    else if (key == "cond_ch") cfg.cond_ch = as_int(1);
    else if (key == "wn_layers") cfg.wn_layers = as_int(1);
    else if (key == "max_dilation") cfg.max_dilation = as_int(1);
    else {
      throw Error("config line " + std::to_string(lineno) +
                  ": unknown key '" + key + "'");
    }
  }
  cfg.Validate();
  return cfg;
}

TrainConfig ParseTrainConfigFile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return ParseTrainConfigText(buf.str());
}

// --- Corpus ----------------------------------------------------------------

Corpus::Corpus(const std::string& dir, int sample_rate, int min_len,
               const PqmfBank& bank) {
  if (!fs::is_directory(dir)) {
    throw Error("Corpus: not a directory: " + dir);
  }
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") {
      wavs.push_back(e.path());
    }
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw Error("Corpus: no .wav files in " + dir);

  int mel_dims = -1;
  for (const fs::path& w : wavs) {
    WavData wav = ReadWav16Mono(w.string());
    if (wav.sample_rate != sample_rate) {
      throw Error("Corpus: " + w.string() + " has sample rate " +
                  std::to_string(wav.sample_rate) + ", config expects " +
                  std::to_string(sample_rate));
    }
    fs::path fpath = w;
    fpath.replace_extension(".pvfe");
    if (!fs::exists(fpath)) {
      throw Error("Corpus: missing feature file " + fpath.string() +
                  " (run the feature extraction step first)");
    }
    MelSpectrogram mel = LoadPvfe(fpath.string());
    if (mel.sample_rate != sample_rate) {
      throw Error("Corpus: " + fpath.string() + " was extracted at " +
                  std::to_string(mel.sample_rate) + " Hz");
    }
    const int64_t expect_frames =
        (static_cast<int64_t>(wav.samples.size()) + mel.hop - 1) / mel.hop;
    if (mel.data.shape[0] != expect_frames) {
      throw Error("Corpus: " + fpath.string() + " has " +
                  std::to_string(mel.data.shape[0]) + " frames, expected " +
                  std::to_string(expect_frames) + " for " +
                  std::to_string(wav.samples.size()) + " samples");
    }
    if (mel_dims < 0) mel_dims = mel.data.shape[1];
    if (mel.data.shape[1] != mel_dims) {
      throw Error("Corpus: inconsistent feature dimension in " +
                  fpath.string());
    }
    if (static_cast<int64_t>(wav.samples.size()) < min_len) {
      std::fprintf(stderr,
                   "Corpus: skipping %s (%zu samples, shorter than one "
                   "segment of %d)\n",
                   w.filename().string().c_str(), wav.samples.size(), min_len);
      continue;
    }
    Utterance u;
    u.name = w.stem().string();
    u.mel_hop = mel.hop;
    u.stack = Analyze(bank, wav.samples);
    u.mel_cm = TransposeMatrix(mel.data);
    u.wav = std::move(wav.samples);
    utts_.push_back(std::move(u));
  }
  if (utts_.empty()) {
    throw Error("Corpus: no utterance is at least " + std::to_string(min_len) +
                " samples long");
  }
}

// --- Batcher ---------------------------------------------------------------

Batcher::Batcher(const Corpus& corpus, const TrainConfig& cfg)
    : corpus_(corpus),
      batch_(cfg.batch),
      segment_(cfg.segment),
      rng_(cfg.seed) {
  const ModelConfig mc = cfg.ToModelConfig();
  n_bands_ = mc.n_bands;
  hop_ = mc.UpsampleProduct() * mc.n_bands;
  for (size_t i = 0; i < corpus.Size(); ++i) {
    const Utterance& u = corpus.Get(i);
    if (u.mel_hop != hop_) {
      throw Error("Batcher: " + u.name + " features use hop " +
                  std::to_string(u.mel_hop) + ", the model needs " +
                  std::to_string(hop_));
    }
  }
}

TrainBatch Batcher::Next() {
  const int t_seg = segment_ / n_bands_;
  const int f_seg = segment_ / hop_;
  const int n_mels = corpus_.Get(0).mel_cm.shape[0];
  TrainBatch b;
  b.bands = Tensor({batch_, n_bands_, t_seg});
  b.mel = Tensor({batch_, n_mels, f_seg});
  b.noise = Tensor({batch_, 1, t_seg});
  for (int bb = 0; bb < batch_; ++bb) {
    const Utterance& u =
        corpus_.Get(rng_.UniformInt(static_cast<int>(corpus_.Size())));
    const int n_pos =
        static_cast<int>((u.wav.size() - segment_) / hop_) + 1;
    const int64_t p = static_cast<int64_t>(rng_.UniformInt(n_pos)) * hop_;
    const int64_t t0 = p / n_bands_;
    const int64_t f0 = p / hop_;
    const int t_sub = u.stack.bands.shape[1];
    const int frames = u.mel_cm.shape[1];
    for (int k = 0; k < n_bands_; ++k) {
      std::memcpy(b.bands.Ptr() +
                      (static_cast<size_t>(bb) * n_bands_ + k) * t_seg,
                  u.stack.bands.Ptr() + static_cast<size_t>(k) * t_sub + t0,
                  sizeof(float) * t_seg);
    }
    for (int m = 0; m < n_mels; ++m) {
      std::memcpy(b.mel.Ptr() + (static_cast<size_t>(bb) * n_mels + m) * f_seg,
                  u.mel_cm.Ptr() + static_cast<size_t>(m) * frames + f0,
                  sizeof(float) * f_seg);
    }
  }
  for (auto& v : b.noise.data) v = static_cast<float>(rng_.Normal());
  return b;
}

// --- Training phases -------------------------------------------------------

namespace {

Val ConstLeaf(Ctx ctx, Tensor t) {
  auto sp = std::make_shared<const Tensor>(std::move(t));
  return ctx.Recording() ? ctx.tape->Leaf(sp, false) : Val{sp, -1};
}

std::vector<std::pair<std::string, Tensor>> MomentsOf(
    const Adam& adam, bool first) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const Adam::Slot& s : adam.Slots()) {
    out.emplace_back(s.name, first ? s.m : s.v);
  }
  return out;
}

void LoadAdamState(Adam& adam, const Checkpoint& ck) {
  if (ck.adam_m.size() != ck.adam_v.size()) {
    throw Error("checkpoint: optimizer moment lists differ in length");
  }
  for (size_t i = 0; i < ck.adam_m.size(); ++i) {
    if (ck.adam_m[i].first != ck.adam_v[i].first) {
      throw Error("checkpoint: optimizer moments out of order at " +
                  ck.adam_m[i].first);
    }
    adam.LoadMoments(ck.adam_m[i].first, ck.adam_m[i].second,
                     ck.adam_v[i].second);
  }
  adam.SetStepCount(ck.adam_step);
}

void AppendLog(std::ofstream& log, int64_t step, const char* name,
               double value) {
  log << step << '\t' << name << '\t' << value << '\n';
  log.flush();
}

// Ground-truth bit planes for one band of a batch, [B, 1, T] each.
std::array<Tensor, 3> BatchBitPlanes(const Tensor& bands, int band) {
  const int bsz = bands.shape[0];
  const int t = bands.shape[2];
  std::array<Tensor, 3> planes{Tensor({bsz, 1, t}), Tensor({bsz, 1, t}),
                               Tensor({bsz, 1, t})};
  for (int b = 0; b < bsz; ++b) {
    for (int i = 0; i < t; ++i) {
      const uint8_t cls = MuLawEncodeSample(bands.At3(b, band, i));
      for (int p = 0; p < 3; ++p) {
        planes[p].data[static_cast<size_t>(b) * t + i] =
            static_cast<float>(ClassBit(cls, p + 1));
      }
    }
  }
  return planes;
}

// Runs the frozen network over all bands and applies the post filter to each
// posterior.  In teacher-forced mode the previous-band input and the bit
// planes come from ground truth; in free-running mode the previous band is
// the post filter's own output and bits are sampled (sharpened, as at
// inference).  Returns the stack in filter-bank channel order.
Val PfForwardStack(Ctx ctx, Binder& bind_net, Binder& bind_pf,
                   const FarBarNetP& net, const PostFilterP& pf,
                   const TrainBatch& batch, FarOrder order, int bar_depth,
                   bool teacher_forced, RandomSource* sample_rng) {
  const ModelConfig& mc = net.cfg;
  const int bsz = batch.bands.shape[0];
  const int t_sub = batch.bands.shape[2];

  Val f_cond =
      UpsampleFeatures(ctx, bind_net, net.upsampler, ConstLeaf(ctx, batch.mel));
  Val h = ConstLeaf(ctx, Tensor({bsz, mc.hidden_ch, t_sub}));
  Val x_prev = ConstLeaf(ctx, batch.noise);

  std::vector<Val> out_bands(mc.n_bands);
  const std::vector<int> visit = BandVisitOrder(mc.n_bands, order);
  const float sharpen[3] = {10.0f, 10.0f, 5.0f};
  for (size_t i = 0; i < visit.size(); ++i) {
    const int band = visit[i];
    std::array<Tensor, 3> gt_planes;
    if (teacher_forced) gt_planes = BatchBitPlanes(batch.bands, band);
    BitSource bits = [&](int plane, const Val& logits) {
      if (teacher_forced) {
        return ConstLeaf(ctx, std::move(gt_planes[plane - 1]));
      }
      Tensor s = SampleBitPlane(V(logits), sharpen[plane - 1], *sample_rng);
      return ConstLeaf(ctx, std::move(s));
    };
    FarStepOut step =
        FarStep(ctx, bind_net, net, x_prev, h, f_cond, bar_depth, bits);
    h = step.h_next;
    Val posterior = SoftmaxCh(ctx, step.posterior_logits);
    Val xb = PfApply(ctx, bind_pf, pf, posterior, f_cond);
    out_bands[band] = xb;

    if (teacher_forced) {
      Tensor gt({bsz, 1, t_sub});
      for (int b = 0; b < bsz; ++b) {
        std::memcpy(gt.Ptr() + static_cast<size_t>(b) * t_sub,
                    batch.bands.Ptr() +
                        (static_cast<size_t>(b) * mc.n_bands + band) * t_sub,
                    sizeof(float) * t_sub);
      }
      x_prev = ConstLeaf(ctx, std::move(gt));
    } else {
      x_prev = xb;  // the generated band feeds the next iteration
    }
  }
  return ConcatCh(ctx, out_bands);
}

// Free-running spectral objective for one batch: mean over items of the
// band-limited multi-resolution loss between reconstructions.
Val PfSpectralBatch(Ctx ctx, const PqmfBank& bank, const Val& pred_stack,
                    const TrainBatch& batch, const StftLossConfig& scfg) {
  const int bsz = batch.bands.shape[0];
  const int n = batch.bands.shape[1];
  const int t_sub = batch.bands.shape[2];
  Val full = SynthesizeVal(ctx, bank, pred_stack, -1);
  Ctx eager;
  Val total;
  for (int b = 0; b < bsz; ++b) {
    Tensor gt({n, t_sub});
    std::memcpy(gt.Ptr(),
                batch.bands.Ptr() + static_cast<size_t>(b) * n * t_sub,
                sizeof(float) * static_cast<size_t>(n) * t_sub);
    Val ref_full = SynthesizeVal(
        eager, bank, Val{std::make_shared<const Tensor>(std::move(gt)), -1},
        -1);
    Val item = SpectralLoss(ctx, SliceBatch(ctx, full, b), V(ref_full), scfg);
    total = total.Defined() ? Add(ctx, total, item) : item;
  }
  return Scale(ctx, total, 1.0f / bsz);
}

// Combined objective on one batch with no recording, used to compare the
// post filter before and after training on identical data.
double PfObjectiveEager(const FarBarNetP& net, const PostFilterP& pf,
                        const PqmfBank& bank, const TrainBatch& batch,
                        FarOrder order, int bar_depth,
                        const StftLossConfig& scfg) {
  Ctx eager;
  Binder bn(eager, false), bp(eager, false);
  Val tf = PfForwardStack(eager, bn, bp, net, pf, batch, order, bar_depth,
                          true, nullptr);
  Val ld = DetailLoss(eager, bank, tf, batch.bands);
  RandomSource rng(12345);  // fixed so both evaluations sample identically
  Binder bn2(eager, false), bp2(eager, false);
  Val fr = PfForwardStack(eager, bn2, bp2, net, pf, batch, order, bar_depth,
                          false, &rng);
  Val ls = PfSpectralBatch(eager, bank, fr, batch, scfg);
  return kPfDetailWeight * static_cast<double>(V(ld).data[0]) +
         kPfSpectralWeight * static_cast<double>(V(ls).data[0]);
}

}  // namespace

TrainResult RunTraining(const TrainConfig& cfg) {
  cfg.Validate();
  const ModelConfig mc = cfg.ToModelConfig();
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  const Corpus corpus(cfg.data_dir, cfg.sample_rate, cfg.segment, bank);
  Batcher batcher(corpus, cfg);
  fs::create_directories(cfg.out_dir);

  RandomSource init_rng(cfg.seed);
  FarBarNetP net = InitFarBarNet(mc, init_rng);
  Adam adam(AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});
  net.Visit("net/", [&adam](const std::string& name, const ParamPtr& p) {
    adam.Register(name, p);
  });

  int64_t start_step = 0;
  if (!cfg.init_checkpoint.empty()) {
    Checkpoint ck = LoadCheckpoint(cfg.init_checkpoint);
    if (ck.has_pf) {
      throw Error("RunTraining: " + cfg.init_checkpoint +
                  " is a post-filter checkpoint; resume phase 1 from a "
                  "phase-1 checkpoint");
    }
    if (ArchFingerprint(ck.model, ck.far_order, ck.bar_depth) !=
        ArchFingerprint(mc, cfg.far_order, cfg.bar_depth)) {
      throw Error("RunTraining: checkpoint architecture differs from the "
                  "configured model");
    }
    net = std::move(ck.net);
    adam = Adam(AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});
    net.Visit("net/", [&adam](const std::string& name, const ParamPtr& p) {
      adam.Register(name, p);
    });
    if (ck.has_adam) LoadAdamState(adam, ck);
    batcher.RestoreRng(ck.rng_state);
    start_step = ck.step;
  }

  std::ofstream log(fs::path(cfg.out_dir) / "train.log", std::ios::app);
  if (!log) throw Error("RunTraining: cannot open train.log");

  TrainResult res;
  res.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.pvck").string();
  std::deque<double> window;

  auto save = [&](int64_t next_step) {
    Checkpoint ck;
    ck.model = mc;
    ck.far_order = cfg.far_order;
    ck.bar_depth = cfg.bar_depth;
    ck.step = next_step;
    ck.adam_step = adam.StepCount();
    ck.rng_state = batcher.RngState();
    ck.net = net;
    ck.has_adam = true;
    ck.adam_m = MomentsOf(adam, true);
    ck.adam_v = MomentsOf(adam, false);
    SaveCheckpoint(res.checkpoint_path, ck);
  };

  for (int64_t s = start_step; s < cfg.steps; ++s) {
    TrainBatch batch = batcher.Next();
    Tape tape;
    Ctx ctx{&tape};
    Binder bind(ctx, true);
    LossParts parts;
    Val loss = TeacherForcedLoss(ctx, bind, net, batch, cfg.far_order,
                                 cfg.bar_depth, &parts);
    if (s == start_step) res.first_loss = parts.ce;
    tape.Backward(loss);
    adam.Step(tape, bind);
    ++res.steps_run;

    window.push_back(parts.ce);
    if (window.size() > 100) window.pop_front();
    if (s == start_step || (s + 1) % cfg.log_every == 0) {
      AppendLog(log, s, "ce", parts.ce);
      AppendLog(log, s, "bce", parts.bce);
      AppendLog(log, s, "total", parts.total);
      std::fprintf(stderr, "step %lld ce %.4f bce %.4f\n",
                   static_cast<long long>(s), parts.ce, parts.bce);
    }
    if ((s + 1) % cfg.checkpoint_every == 0 || s + 1 == cfg.steps) {
      save(s + 1);
    }
  }
  double acc = 0.0;
  for (double v : window) acc += v;
  res.last_loss = window.empty() ? 0.0 : acc / window.size();
  return res;
}

TrainResult RunPfTraining(const TrainConfig& cfg) {
  if (cfg.init_checkpoint.empty()) {
    throw Error("RunPfTraining: the post filter trains against a frozen "
                "network; set init_checkpoint to a phase-1 checkpoint");
  }
  Checkpoint ck = LoadCheckpoint(cfg.init_checkpoint);

  // The architecture comes from the checkpoint; the run configuration keeps
  // its schedule fields but must agree with it where both speak.
  TrainConfig run = cfg;
  run.group = ck.model.group;
  run.residual_ch = ck.model.residual_ch;
  run.hidden_ch = ck.model.hidden_ch;
  run.cond_ch = ck.model.cond_ch;
  run.wn_layers = ck.model.wn_layers;
  run.max_dilation = ck.model.max_dilation;
  run.sample_rate = ck.model.sample_rate;
  run.far_order = ck.far_order;
  run.bar_depth = ck.bar_depth;
  run.Validate();

  const ModelConfig mc = ck.model;
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  const Corpus corpus(run.data_dir, run.sample_rate, run.segment, bank);
  Batcher batcher(corpus, run);
  fs::create_directories(run.out_dir);

  FarBarNetP net = std::move(ck.net);
  RandomSource init_rng(run.seed ^ 0x9e3779b97f4a7c15ull);
  PostFilterP pf = ck.has_pf ? std::move(ck.pf) : InitPostFilter(mc, init_rng);
  RandomSource sample_rng(run.seed + 1);

  Adam adam(AdamConfig{run.lr, 0.9f, 0.999f, 1e-8f});
  pf.Visit("pf/", [&adam](const std::string& name, const ParamPtr& p) {
    adam.Register(name, p);
  });
  int64_t start_step = 0;
  if (ck.has_pf) {
    if (ck.has_adam) LoadAdamState(adam, ck);
    batcher.RestoreRng(ck.rng_state);
    if (!ck.rng_state2.empty()) sample_rng.RestoreState(ck.rng_state2);
    start_step = ck.step;
  }

  StftLossConfig scfg;
  scfg.sample_rate = mc.sample_rate;

  std::ofstream log(fs::path(run.out_dir) / "train.log", std::ios::app);
  if (!log) throw Error("RunPfTraining: cannot open train.log");

  TrainResult res;
  res.checkpoint_path =
      (fs::path(run.out_dir) / "checkpoint_pf.pvck").string();

  // Fixed probe batch for the before/after objective comparison.
  TrainConfig probe_cfg = run;
  probe_cfg.seed = run.seed + 17;
  Batcher probe(corpus, probe_cfg);
  const TrainBatch probe_batch = probe.Next();
  res.first_loss = PfObjectiveEager(net, pf, bank, probe_batch, run.far_order,
                                    run.bar_depth, scfg);

  auto save = [&](int64_t next_step) {
    Checkpoint out;
    out.model = mc;
    out.far_order = run.far_order;
    out.bar_depth = run.bar_depth;
    out.step = next_step;
    out.adam_step = adam.StepCount();
    out.rng_state = batcher.RngState();
    out.rng_state2 = sample_rng.StateString();
    out.net = net;
    out.has_pf = true;
    out.pf = pf;
    out.has_adam = true;
    out.adam_m = MomentsOf(adam, true);
    out.adam_v = MomentsOf(adam, false);
    SaveCheckpoint(res.checkpoint_path, out);
  };

  for (int64_t s = start_step; s < run.steps; ++s) {
    TrainBatch batch = batcher.Next();
    Tape tape;
    Ctx ctx{&tape};
    Binder bind_net(ctx, false);  // frozen: no gradients into the main net
    Binder bind_pf(ctx, true);
    const bool teacher = (s % 2) == 0;
    Val stack = PfForwardStack(ctx, bind_net, bind_pf, net, pf, batch,
                               run.far_order, run.bar_depth, teacher,
                               &sample_rng);
    Val loss;
    if (teacher) {
      Val ld = DetailLoss(ctx, bank, stack, batch.bands);
      loss = Scale(ctx, ld, kPfDetailWeight);
      if (s == start_step || (s + 1) % run.log_every == 0) {
        AppendLog(log, s, "ld", V(ld).data[0]);
        std::fprintf(stderr, "step %lld ld %.4f\n", static_cast<long long>(s),
                     static_cast<double>(V(ld).data[0]));
      }
    } else {
      Val ls = PfSpectralBatch(ctx, bank, stack, batch, scfg);
      loss = Scale(ctx, ls, kPfSpectralWeight);
      if (s == start_step || (s + 1) % run.log_every == 0) {
        AppendLog(log, s, "ls", V(ls).data[0]);
        std::fprintf(stderr, "step %lld ls %.4f\n", static_cast<long long>(s),
                     static_cast<double>(V(ls).data[0]));
      }
    }
    tape.Backward(loss);
    adam.Step(tape, bind_pf);
    ++res.steps_run;
    if ((s + 1) % run.checkpoint_every == 0 || s + 1 == run.steps) {
      save(s + 1);
    }
  }
  res.last_loss = PfObjectiveEager(net, pf, bank, probe_batch, run.far_order,
                                   run.bar_depth, scfg);
  AppendLog(log, run.steps, "lpf_probe_before", res.first_loss);
  AppendLog(log, run.steps, "lpf_probe_after", res.last_loss);
  return res;
}

}  // namespace parvoc
