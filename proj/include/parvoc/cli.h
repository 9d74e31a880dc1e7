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

// Batch command-line front end.  Each subcommand is a plain function
// returning a process exit code, so tests can drive them in-process;
// RunCli only does argument parsing and dispatch.
//
// Exit code contract, shared by every subcommand:
//   0  success
//   1  internal failure (and failed selftest checks)
//   2  usage problems: bad flags, malformed config, empty input directory
//   3  bad input data: unreadable or malformed files, mismatched pairs;
//      the offending file is named on stderr
//
// stdout carries data and tables; stderr carries diagnostics and progress.

#ifndef PARVOC_CLI_H_
#define PARVOC_CLI_H_

#include <cstdint>
#include <string>
#include <vector>

namespace parvoc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBadInput = 3;

struct SynthFlags {
  bool no_pf = false;   // sample the class posterior instead of the PF
  int group = 0;        // 0 keeps the checkpoint's group; must match it
  bool inv_far = false; // generate subbands low to high
  int bar_depth = -1;   // -1 keeps the checkpoint's depth; else 0, 2, 3
  uint64_t seed = 1;
};

struct BenchFlags {
  std::vector<double> durations = {2.0, 10.0};  // seconds of audio each
  int group = 0;      // differing from the checkpoint times random weights
  int bar_depth = -1;
  bool no_pf = false;
  uint64_t seed = 1;
};

// One feature file per WAV in in_dir, written to out_dir.
int CmdFeatures(const std::string& in_dir, const std::string& out_dir);

// Phase-1 / phase-2 training driven by a key=value config file.
int CmdTrain(const std::string& config_path);
int CmdTrainPf(const std::string& config_path);

// Feature file -> WAV through a trained checkpoint.
int CmdSynth(const std::string& checkpoint, const std::string& features,
             const std::string& out_wav, const SynthFlags& flags);

// Filter-bank analysis/synthesis round trip, no model; prints the SNR.
int CmdCopySynth(const std::string& in_wav, const std::string& out_wav);

// Objective comparison of two directories of WAVs matched by filename.
// report_path may be empty (stdout only).
int CmdEval(const std::string& ref_dir, const std::string& gen_dir,
            const std::string& report_path);

// Generation throughput table (TSV on stdout) over synthetic features.
int CmdBench(const std::string& checkpoint, const BenchFlags& flags);

// Quick built-in health checks; one line per check.
int CmdSelftest();

// Entry point; args excludes the program name.
int RunCli(const std::vector<std::string>& args);

}  // namespace parvoc

#endif  // PARVOC_CLI_H_
