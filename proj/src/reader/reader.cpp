#include "qadistill/reader/reader.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qadistill/errors.hpp"
#include "qadistill/numerics/ops.hpp"

namespace qadistill {

ReaderInput make_input(const Example& example, const Vocabulary& vocab) {
  return {vocab.encode(example.question_tokens), vocab.encode(example.passage_tokens())};
}

ReaderVars bind_trainable(Tape& tape, const ReaderParams& params, ReaderParams& grads) {
  ReaderVars out;
  out.config = params.config();
  for (std::size_t i = 0; i < ReaderParams::kSlotCount; ++i) out.slot[i] = tape.parameter(params[i], grads[i]);
  return out;
}

ReaderVars bind_frozen(Tape& tape, const ReaderParams& params) {
  ReaderVars out;
  out.config = params.config();
  for (std::size_t i = 0; i < ReaderParams::kSlotCount; ++i) out.slot[i] = tape.reference(params[i]);
  return out;
}

ReaderVars bind_vars(std::span<const Var> vars, const ReaderConfig& config) {
  if (vars.size() != ReaderParams::kSlotCount) {
    throw ShapeError(fmt::format("reader needs {} arrays, got {}", static_cast<int>(ReaderParams::kSlotCount), vars.size()));
  }
  ReaderVars out;
  out.config = config;
  for (std::size_t i = 0; i < vars.size(); ++i) out.slot[i] = vars[i];
  return out;
}

Var contextualize(const ReaderVars& p, Var embedded) {
  const std::size_t r = p.config.window_radius;
  Var h1 = tanh(add_row(matmul(window_concat(embedded, r), p[ReaderParams::kContext0Weight]),
                        p[ReaderParams::kContext0Bias]));
  return tanh(add_row(matmul(window_concat(h1, r), p[ReaderParams::kContext1Weight]), p[ReaderParams::kContext1Bias]));
}

Encoded encode(const ReaderVars& p, const ReaderInput& input) {
  if (input.question.empty() || input.passage.empty()) throw DataError("reader input needs a question and a passage");
  Var table = p[ReaderParams::kEmbedding];
  return {contextualize(p, gather_rows(table, input.question)), contextualize(p, gather_rows(table, input.passage))};
}

Var similarity(const ReaderVars& p, Var question, Var passage) {
  const double norm = 1.0 / std::sqrt(static_cast<double>(p.config.hidden));
  Var q = matmul(question, p[ReaderParams::kSimilarityQuery]);
  Var u = matmul(passage, p[ReaderParams::kSimilarityPassage]);
  return scale(matmul_nt(q, u), norm);
}

Fused attend_and_fuse(const ReaderVars& p, Var sim, Var question, Var passage) {
  Var attention = row_softmax(transpose(sim));
  Var summary = matmul(attention, question);
  Var joined = concat_cols({passage, summary, mul(passage, summary)});
  Var fused = tanh(add_row(matmul(joined, p[ReaderParams::kFuseWeight]), p[ReaderParams::kFuseBias]));
  return {fused, attention};
}

ReaderOutput forward(const ReaderVars& p, const ReaderInput& input) {
  Encoded enc = encode(p, input);
  Var sim = similarity(p, enc.question, enc.passage);
  Fused fused = attend_and_fuse(p, sim, enc.question, enc.passage);
  const std::size_t m = input.passage.size();

  ReaderOutput out;
  out.attention = fused.attention;
  out.start_logits = reshape(matmul(fused.passage, p[ReaderParams::kStartWeight]), {m});
  out.start_dist = softmax_temp(out.start_logits, 1.0);

  Var pointer = matmul(reshape(out.start_dist, {1, m}), fused.passage);
  Var end_input = concat_cols({fused.passage, repeat_rows(pointer, m)});
  out.end_logits = reshape(matmul(end_input, p[ReaderParams::kEndWeight]), {m});
  out.end_dist = softmax_temp(out.end_logits, 1.0);
  return out;
}

Prediction predict(const ReaderParams& params, const ReaderInput& input) {
  Tape tape;
  ReaderOutput out = forward(bind_frozen(tape, params), input);
  Prediction pred;
  pred.start_logits = out.start_logits.value().storage();
  pred.end_logits = out.end_logits.value().storage();
  pred.start_dist = out.start_dist.value().storage();
  pred.end_dist = out.end_dist.value().storage();
  pred.attention = out.attention.value();
  return pred;
}

}  // namespace qadistill
