#include "qadistill/pipeline/trainer.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "qadistill/corpus/synthetic.hpp"
#include "qadistill/decode_eval/spans.hpp"
#include "qadistill/errors.hpp"
#include "qadistill/numerics/ops.hpp"
#include "qadistill/pipeline/optimizer.hpp"

namespace qadistill {

LossTerms example_terms(const ReaderOutput& out, const TrainItem& item, const DistillConfig& config, Phase phase,
                        bool distill) {
  LossTerms terms;
  const Example& ex = *item.example;
  const bool gold = item.hard_label && !ex.gold_spans.empty();
  const TeacherAnnotation* a = distill ? item.annotation : nullptr;
  if (phase == Phase::kWarmup) {
    if (a) terms.att = loss_att(out.attention, a->attention);
    return terms;
  }
  if (gold) terms.ce = loss_ce(out, ex.gold_spans.front());
  if (!a) return terms;
  if (config.use_kd) terms.kd = loss_kd(out.start_logits, out.end_logits, a->start_soft, a->end_soft, config.tau);
  if (config.use_ans && gold && a->confusing) {
    terms.ans = loss_ans(out.start_logits, out.end_logits, ex.gold_spans.front(), a->confusing->span, config.margin);
  }
  if (config.use_att) terms.att = loss_att(out.attention, a->attention);
  return terms;
}

std::optional<Var> example_objective(const LossTerms& terms, const DistillConfig& config, Phase phase) {
  if (phase == Phase::kWarmup) {
    if (!terms.att) return std::nullopt;
    return scale(*terms.att, config.delta);
  }
  return loss_joint(terms, config);
}

namespace {

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);
}

}  // namespace

TrainResult train_reader(const TrainConfig& config, const ReaderParams& init, std::span<const TrainItem> items,
                         std::span<const Example> dev, const Vocabulary& vocab, bool distill,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (items.empty()) throw DataError("no training examples");
  const DistillConfig& dc = config.distill;

  TrainResult result;
  ReaderParams params = init;
  ReaderParams grads(params.config());
  Adam adam(params, {config.learning_rate, config.beta1, config.beta2, config.adam_eps});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t warmup = distill && dc.stagewise ? config.warmup_epochs : 0;
  for (std::size_t epoch = 1; epoch <= warmup + config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const Phase phase = epoch <= warmup ? Phase::kWarmup : Phase::kMain;
    shuffle(order, rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase == Phase::kWarmup ? "warmup" : "main";
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double seed = 1.0 / static_cast<double>(end - begin);
      grads.zero();
      bool any = false;
      for (std::size_t b = begin; b < end; ++b) {
        const TrainItem& item = items[order[b]];
        Tape tape;
        auto out = forward(bind_trainable(tape, params, grads), item.input);
        LossTerms terms = example_terms(out, item, dc, phase, distill);
        auto objective = example_objective(terms, dc, phase);
        if (!objective) continue;
        const double value = objective->value().item();
        if (!std::isfinite(value)) {
          throw NumericalError(fmt::format("non-finite loss {} at epoch {} on example {}", value, epoch, item.example->id));
        }
        const LossValues v = values_of(terms);
        rec.loss += value;
        rec.terms.ce += v.ce;
        rec.terms.kd += v.kd;
        rec.terms.ans += v.ans;
        rec.terms.att += v.att;
        tape.backward(*objective, seed);
        any = true;
      }
      if (!any) continue;
      const double norm = clip_global_norm(grads, config.clip_norm);
      if (!std::isfinite(norm)) throw NumericalError(fmt::format("non-finite gradient norm at epoch {}", epoch));
      adam.step(params, grads);
    }
    const double n = static_cast<double>(items.size());
    rec.loss /= n;
    rec.terms.ce /= n;
    rec.terms.kd /= n;
    rec.terms.ans /= n;
    rec.terms.att /= n;

    if (!dev.empty()) {
      const ReaderParams* model = &params;
      auto report = evaluate(predict_answers(std::span(&model, 1), dev, vocab, dc.max_span_len), dev);
      rec.dev_em = report.em;
      rec.dev_f1 = report.f1;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (phase == Phase::kMain && (dev.empty() || rec.dev_f1 > result.best_dev_f1)) {
      result.best_dev_f1 = rec.dev_f1;
      result.best_epoch = epoch;
      result.params = params;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

Predictions predict_answers(std::span<const ReaderParams* const> models, std::span<const Example> examples,
                            const Vocabulary& vocab, std::size_t max_span_len) {
  if (models.empty()) throw ConfigError("no models to predict with");
  Predictions out;
  for (const auto& ex : examples) {
    const ReaderInput input = make_input(ex, vocab);
    std::vector<double> p1, p2;
    for (const ReaderParams* model : models) {
      auto pred = predict(*model, input);
      if (p1.empty()) {
        p1 = std::move(pred.start_dist);
        p2 = std::move(pred.end_dist);
      } else {
        for (std::size_t i = 0; i < p1.size(); ++i) {
          p1[i] += pred.start_dist[i];
          p2[i] += pred.end_dist[i];
        }
      }
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
      p1[i] *= inv;
      p2[i] *= inv;
    }
    auto best = topk_spans(p1, p2, 1, max_span_len);
    attach_text(best, *ex.passage);
    out[ex.id] = best.empty() ? std::string() : best.front().text;
  }
  return out;
}

}  // namespace qadistill
