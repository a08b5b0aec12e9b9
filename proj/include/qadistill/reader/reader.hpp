#pragma once

#include <array>
#include <span>
#include <vector>

#include "qadistill/corpus/example.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/numerics/tape.hpp"
#include "qadistill/reader/params.hpp"

namespace qadistill {

// Token indices of one example.
struct ReaderInput {
  std::vector<int> question;
  std::vector<int> passage;
};

ReaderInput make_input(const Example& example, const Vocabulary& vocab);

// Reader parameters bound to a tape, in ReaderParams slot order.
struct ReaderVars {
  std::array<Var, ReaderParams::kSlotCount> slot;
  ReaderConfig config;
  Var operator[](std::size_t i) const { return slot[i]; }
};

// Parameters with gradients accumulated into `grads` (same layout as params).
ReaderVars bind_trainable(Tape& tape, const ReaderParams& params, ReaderParams& grads);
// Parameters as untracked references.
ReaderVars bind_frozen(Tape& tape, const ReaderParams& params);
// Variables already on a tape, e.g. gradient-check leaves.
ReaderVars bind_vars(std::span<const Var> vars, const ReaderConfig& config);

struct Encoded {
  Var question;  // n x h
  Var passage;   // m x h
};

struct Fused {
  Var passage;    // m x h
  Var attention;  // m x n, row j is the distribution over question words for passage word j
};

struct ReaderOutput {
  Var start_logits;  // [m]
  Var end_logits;    // [m]
  Var attention;     // m x n
  Var start_dist;    // [m], temperature 1
  Var end_dist;      // [m], temperature 1
};

// Two window layers: each row becomes tanh([x_{t-r} .. x_{t+r}] W + b).
Encoded encode(const ReaderVars& p, const ReaderInput& input);
Var contextualize(const ReaderVars& p, Var embedded);

// E (n x m) with E_ij = (v_i Wq) . (u_j Wp) / sqrt(h).
Var similarity(const ReaderVars& p, Var question, Var passage);

// Per passage word: softmax of E's column over the question, attended summary
// s_j = sum_i a_ji v_i, and fused_j = tanh([u_j ; s_j ; u_j * s_j] Wf + bf).
Fused attend_and_fuse(const ReaderVars& p, Var similarity, Var question, Var passage);

// The end head sees each fused word next to the start-distribution-weighted
// summary of the fused passage.
ReaderOutput forward(const ReaderVars& p, const ReaderInput& input);

// Plain values of one forward pass over frozen parameters.
struct Prediction {
  std::vector<double> start_logits;
  std::vector<double> end_logits;
  std::vector<double> start_dist;
  std::vector<double> end_dist;
  Tensor attention;  // m x n
};

Prediction predict(const ReaderParams& params, const ReaderInput& input);

}  // namespace qadistill
