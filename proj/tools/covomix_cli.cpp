// Command-line front-end. Everything goes through the shared-library C API:
// flags become configuration keys on a covomix context, then one command runs.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covomix.h"

namespace {

struct CtxDeleter {
  void operator()(covomix_ctx* c) const { covomix_destroy(c); }
};
using CtxPtr = std::unique_ptr<covomix_ctx, CtxDeleter>;

// Deferred key=value assignments collected while parsing flags.
struct Pending {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string config_file;

  void add(const std::string& key, const std::string& value) { kv.emplace_back(key, value); }
};

int apply_and_run(covomix_ctx* ctx, const Pending& pending,
                  covomix_status (*command)(covomix_ctx*)) {
  if (!pending.config_file.empty()) {
    if (covomix_config_load(ctx, pending.config_file.c_str()) != COVOMIX_OK) {
      std::fprintf(stderr, "error: %s\n", covomix_last_error(ctx));
      return COVOMIX_ERR_USAGE;
    }
  }
  for (const auto& [k, v] : pending.kv) {
    if (covomix_config_set(ctx, k.c_str(), v.c_str()) != COVOMIX_OK) {
      std::fprintf(stderr, "error: %s\n", covomix_last_error(ctx));
      return COVOMIX_ERR_USAGE;
    }
  }
  const covomix_status status = command(ctx);
  if (status != COVOMIX_OK) {
    const char* msg = covomix_last_error(ctx);
    if (msg && msg[0]) std::fprintf(stderr, "error: %s\n", msg);
  }
  return status;
}

// Registers an option that lands in the config map under `key`.
void opt(CLI::App* cmd, Pending& pending, const std::string& flag, const std::string& key,
         const std::string& help, bool required = false) {
  auto* o = cmd->add_option_function<std::string>(
      flag, [&pending, key](const std::string& v) { pending.add(key, v); }, help);
  if (required) o->required();
}

void common_opts(CLI::App* cmd, Pending& pending) {
  cmd->add_option_function<std::string>(
      "--config", [&pending](const std::string& v) { pending.config_file = v; },
      "key = value configuration file applied before flags");
  cmd->add_option_function<std::vector<std::string>>(
      "--set",
      [&pending](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value");
          pending.add(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "extra key=value settings");
  opt(cmd, pending, "--seed", "seed", "master random seed (default 0)");
  opt(cmd, pending, "--threads", "threads", "worker threads (or COVOMIX_THREADS)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covomix: zero-shot multi-talker dialogue speech synthesis toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", covomix_version());

  CtxPtr ctx(covomix_create());
  if (!ctx) {
    std::fprintf(stderr, "error: out of memory\n");
    return COVOMIX_ERR_DATA;
  }
  Pending pending;
  covomix_status (*command)(covomix_ctx*) = nullptr;

  auto* prepare = app.add_subcommand("prepare", "slice recordings into dialogue/monologue samples");
  opt(prepare, pending, "--data-dir", "data_dir", "directory of <stem>.jsonl + <stem>.wav", true);
  opt(prepare, pending, "--out-dir", "out_dir", "output directory", true);
  opt(prepare, pending, "--max-duration", "max_duration", "dialogue cache limit in seconds (40)");
  opt(prepare, pending, "--min-monologue", "min_monologue_s", "long monologue minimum seconds (10)");
  opt(prepare, pending, "--min-short-monologue", "min_short_monologue_s",
      "short monologue minimum seconds (1)");
  opt(prepare, pending, "--pad-tail", "pad_tail_s", "trailing silence per sample in seconds (0.5)");
  common_opts(prepare, pending);
  prepare->callback([&]() { command = covomix_prepare; });

  auto* fitcb = app.add_subcommand("fit-codebook", "fit the k-means acoustic codebook and tokenize");
  opt(fitcb, pending, "--out-dir", "out_dir", "prepared data directory", true);
  opt(fitcb, pending, "--codebook-size", "codebook_size", "number of clusters K (64)");
  common_opts(fitcb, pending);
  fitcb->callback([&]() { command = covomix_fit_codebook; });

  auto add_train_opts = [&](CLI::App* cmd) {
    opt(cmd, pending, "--out-dir", "out_dir", "prepared data directory", true);
    opt(cmd, pending, "--lr", "lr", "Adam learning rate (1e-4)");
    opt(cmd, pending, "--epochs", "epochs", "training epochs");
    opt(cmd, pending, "--batch", "batch", "batch size (2)");
    opt(cmd, pending, "--max-steps", "max_steps", "hard optimizer step limit (0 = none)");
    opt(cmd, pending, "--valid-frac", "valid_frac", "validation fraction (0 trains on all)");
    opt(cmd, pending, "--resume", "resume", "resume from the saved training state (0/1)");
    opt(cmd, pending, "--heads", "heads", "attention heads (2)");
    opt(cmd, pending, "--ffn-mult", "ffn_mult", "feed-forward width multiplier (4)");
    common_opts(cmd, pending);
  };

  auto* train_t2s = app.add_subcommand("train-t2s", "train the text-to-semantic model");
  opt(train_t2s, pending, "--variant", "variant", "single | mix (default mix)");
  opt(train_t2s, pending, "--enc-layers", "enc_layers", "encoder layers (4)");
  opt(train_t2s, pending, "--dec-layers", "dec_layers", "decoder layers (4)");
  opt(train_t2s, pending, "--enc-dim", "enc_dim", "encoder width (128)");
  opt(train_t2s, pending, "--dec-dim", "dec_dim", "decoder width (128)");
  opt(train_t2s, pending, "--ckpt", "t2s_ckpt", "checkpoint path override");
  add_train_opts(train_t2s);
  train_t2s->callback([&]() { command = covomix_train_t2s; });

  auto* train_ac = app.add_subcommand("train-acoustic", "train the flow-matching acoustic model");
  opt(train_ac, pending, "--variant", "variant", "single | mix | stereo (default mix)");
  opt(train_ac, pending, "--layers", "layers", "transformer layers (2)");
  opt(train_ac, pending, "--dim", "dim", "hidden width (128)");
  opt(train_ac, pending, "--emb-dim", "emb_dim", "semantic embedding width (32)");
  opt(train_ac, pending, "--p-uncond", "p_uncond", "condition drop probability (0.3)");
  opt(train_ac, pending, "--sigma-min", "sigma_min", "flow path deviation (1e-4)");
  opt(train_ac, pending, "--ckpt", "acoustic_ckpt", "checkpoint path override");
  add_train_opts(train_ac);
  train_ac->callback([&]() { command = covomix_train_acoustic; });

  auto add_sampling_opts = [&](CLI::App* cmd) {
    opt(cmd, pending, "--steps", "steps", "ODE solver steps (32)");
    opt(cmd, pending, "--alpha", "alpha", "guidance strength (0.7)");
    opt(cmd, pending, "--solver", "solver", "euler | midpoint (euler)");
    opt(cmd, pending, "--griffin-lim-iters", "griffin_lim_iters", "vocoder iterations (60)");
    opt(cmd, pending, "--codebook", "codebook", "codebook file", true);
    opt(cmd, pending, "--acoustic-ckpt", "acoustic_ckpt", "acoustic checkpoint", true);
    opt(cmd, pending, "--prompt-a", "prompt_a", "mono wav prompt, first speaker");
    opt(cmd, pending, "--prompt-b", "prompt_b", "mono wav prompt, second speaker");
    opt(cmd, pending, "--out", "out", "output wav path", true);
    common_opts(cmd, pending);
  };

  auto* synth = app.add_subcommand("synth", "synthesize dialogue speech from a transcript");
  opt(synth, pending, "--text", "text", "serialized transcript ([spkchange]/| marks turns)", true);
  opt(synth, pending, "--t2s-ckpt", "t2s_ckpt", "text-to-semantic checkpoint", true);
  opt(synth, pending, "--vocab", "vocab", "text vocab file", true);
  opt(synth, pending, "--max-frames", "max_frames", "semantic generation cap (400)");
  opt(synth, pending, "--temperature", "temperature", "sampling temperature (0 = greedy)");
  add_sampling_opts(synth);
  synth->callback([&]() { command = covomix_synth; });

  auto* vc = app.add_subcommand("vc", "voice-convert a recording onto prompt speakers");
  opt(vc, pending, "--source", "source", "source wav (stereo or mono)", true);
  add_sampling_opts(vc);
  vc->callback([&]() { command = covomix_voice_convert; });

  auto* eval = app.add_subcommand("eval", "score synthesized audio against references");
  opt(eval, pending, "--hyp-dir", "hyp_dir", "synthesized side", true);
  opt(eval, pending, "--ref-dir", "ref_dir", "reference side", true);
  opt(eval, pending, "--report-dir", "report_dir", "report output directory", true);
  opt(eval, pending, "--mcd-order", "mcd_order", "cepstral order for MCD (13)");
  opt(eval, pending, "--hist-bins", "hist_bins", "comma-separated histogram edges");
  common_opts(eval, pending);
  eval->callback([&]() { command = covomix_eval; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : COVOMIX_ERR_USAGE;
  }
  return apply_and_run(ctx.get(), pending, command);
}
