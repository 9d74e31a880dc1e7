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

// Training infrastructure: corpus loading and segment batching, the Adam
// optimizer, binary checkpoints, and the two training phases (main network
// on quantized targets, then the post filter against a frozen network).
// Everything here is single threaded and deterministic under a fixed seed.

#ifndef PARVOC_TRAINER_H_
#define PARVOC_TRAINER_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "parvoc/autodiff.h"
#include "parvoc/filterbank.h"
#include "parvoc/model.h"
#include "parvoc/postfilter.h"
#include "parvoc/rng.h"

namespace parvoc {

// --- Optimizer -------------------------------------------------------------

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard bias-corrected Adam over registered named parameters.  Parameters
// whose node received no gradient in a step are left untouched (their
// moments do not decay either).  A non-finite gradient aborts the run,
// naming the parameter, since continuing would poison every later step.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  void Register(const std::string& name, const ParamPtr& p);

  // One update from the gradients accumulated on `tape`, with node lookup
  // through `bind`.  Must run after Tape::Backward.
  void Step(const Tape& tape, const Binder& bind);

  int64_t StepCount() const { return step_; }
  void SetStepCount(int64_t s) { step_ = s; }

  // Moment tensors in registration order, for checkpointing.
  struct Slot {
    std::string name;
    ParamPtr param;
    Tensor m;
    Tensor v;
  };
  const std::vector<Slot>& Slots() const { return slots_; }
  // Restores a moment pair by parameter name; shapes must match.
  void LoadMoments(const std::string& name, const Tensor& m, const Tensor& v);

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<Slot> slots_;
};

// --- Checkpoints -----------------------------------------------------------

// Binary container: magic "PVCK", version, one key=value config text block,
// then named little-endian float32 tensor records.  Save -> Load -> Save is
// byte identical.
struct Checkpoint {
  ModelConfig model;
  FarOrder far_order = FarOrder::kHighToLow;
  int bar_depth = 3;
  int64_t step = 0;
  int64_t adam_step = 0;
  std::string rng_state;   // batcher generator state, textual
  std::string rng_state2;  // PF-phase sampling generator; empty in phase 1

  FarBarNetP net;
  bool has_pf = false;
  PostFilterP pf;

  // Optimizer moments by parameter name ("net/..." or "pf/...").
  bool has_adam = false;
  std::vector<std::pair<std::string, Tensor>> adam_m;
  std::vector<std::pair<std::string, Tensor>> adam_v;
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ck);
Checkpoint LoadCheckpoint(const std::string& path);

// --- Configuration ---------------------------------------------------------

// Key=value text configuration.  '#' starts a comment; every key has a
// default; an unknown key is an error so typos cannot silently train the
// wrong model.
struct TrainConfig {
  std::string data_dir;
  std::string out_dir = ".";
  std::string init_checkpoint;  // resume source; required for the PF phase

  int sample_rate = 24000;
  int batch = 4;
  int segment = 8000;  // waveform samples per training example
  int steps = 10000;
  int checkpoint_every = 2000;
  int log_every = 50;
  float lr = 1e-4f;
  uint64_t seed = 1;

  // Ablation switches.
  int group = 1;
  int bar_depth = 3;
  FarOrder far_order = FarOrder::kHighToLow;

  // Architecture scaling for toy runs; defaults are the full model.
  int residual_ch = 128;
  int hidden_ch = 16;
  int cond_ch = 32;
  int wn_layers = 15;
  int max_dilation = 32;

  void Validate() const;
  ModelConfig ToModelConfig() const;
};

TrainConfig ParseTrainConfigText(const std::string& text);
TrainConfig ParseTrainConfigFile(const std::string& path);

// --- Corpus and batching ---------------------------------------------------

struct Utterance {
  std::string name;
  std::vector<float> wav;
  Tensor mel_cm;       // [n_mels, frames], channel major
  int mel_hop = 0;
  SubbandStack stack;  // whole-utterance analysis, cached once
};

// Loads every .wav in a directory together with its .pvfe feature file.
// Files at the wrong sample rate or without features are hard errors;
// utterances shorter than one segment are skipped with a warning.
class Corpus {
 public:
  Corpus(const std::string& dir, int sample_rate, int min_len,
         const PqmfBank& bank);

  size_t Size() const { return utts_.size(); }
  const Utterance& Get(size_t i) const { return utts_[i]; }

 private:
  std::vector<Utterance> utts_;
};

// Draws fixed-length, hop-aligned segments.  Subband targets and feature
// frames are sliced from the cached whole-utterance analysis, so batching
// never re-runs the filter bank.
class Batcher {
 public:
  Batcher(const Corpus& corpus, const TrainConfig& cfg);

  TrainBatch Next();

  std::string RngState() const { return rng_.StateString(); }
  void RestoreRng(const std::string& s) { rng_.RestoreState(s); }

 private:
  const Corpus& corpus_;
  int batch_;
  int segment_;
  int hop_;
  int n_bands_;
  RandomSource rng_;
};

// --- Training phases -------------------------------------------------------

struct TrainResult {
  int64_t steps_run = 0;
  double first_loss = 0.0;  // step-0 batch objective, before any update
  double last_loss = 0.0;   // mean objective over the final logged window
  std::string checkpoint_path;
};

// Phase 1: teacher-forced cross-entropy training of the main network.
// Writes checkpoints and an append-only "train.log" under out_dir.
TrainResult RunTraining(const TrainConfig& cfg);

// Phase 2: freezes the network from init_checkpoint and trains the post
// filter, alternating a teacher-forced detail-loss batch with a free-running
// spectral-loss batch.  Refuses to start without a phase-1 checkpoint.
TrainResult RunPfTraining(const TrainConfig& cfg);

}  // namespace parvoc

#endif  // PARVOC_TRAINER_H_
