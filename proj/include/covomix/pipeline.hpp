#pragma once

#include <string>

#include "covomix/config.hpp"

namespace covomix::pipeline {

// Command entry points behind the CLI and the C API. Each validates its
// configuration, performs the work, prints a short summary to stdout, and
// returns a process exit code (0 = ok). Hard failures throw UsageError /
// DataError / NumericError, which callers map to exit codes 1 / 2 / 3.

// data_dir (-> <stem>.jsonl + <stem>.wav) into out_dir: sliced dialogue and
// monologue samples, simulated dialogues, serialized texts, mel/wav files,
// vocab, and manifest.jsonl.
int run_prepare(const cfg::RunConfig& config);

// Fits the k-means codebook over prepared channel mels, writes codebook.bin,
// tokenizes every channel, and rewrites the manifest with token paths.
int run_fit_codebook(const cfg::RunConfig& config);

int run_train_t2s(const cfg::RunConfig& config);
int run_train_acoustic(const cfg::RunConfig& config);

// Dialogue synthesis from text plus per-speaker acoustic prompts.
int run_synth(const cfg::RunConfig& config);

// Voice conversion of a source recording onto target prompt speakers.
int run_vc(const cfg::RunConfig& config);

// Paired hyp/ref evaluation: MCD-DTW per pair plus turn-taking, laughter,
// and consistency reports from annotation files.
int run_eval(const cfg::RunConfig& config);

}  // namespace covomix::pipeline
