#include "qadistill/corpus/squad.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "qadistill/corpus/tokenize.hpp"
#include "qadistill/decode_eval/metrics.hpp"
#include "qadistill/errors.hpp"

namespace qadistill {

using nlohmann::json;

Passage make_passage(std::string context) {
  Passage p;
  auto tok = tokenize(context);
  p.raw_context = std::move(context);
  p.tokens = std::move(tok.tokens);
  p.offsets = std::move(tok.offsets);
  return p;
}

bool align_answer(const Passage& passage, std::size_t answer_start, const std::string& answer_text, TokenSpan* out) {
  const std::size_t answer_end = answer_start + answer_text.size();
  if (answer_text.empty() || answer_end > passage.raw_context.size()) return false;
  int first = -1;
  int last = -1;
  for (std::size_t i = 0; i < passage.offsets.size(); ++i) {
    const auto& o = passage.offsets[i];
    if (first < 0 && o.end > answer_start) first = static_cast<int>(i);
    if (o.begin < answer_end) last = static_cast<int>(i);
  }
  if (first < 0 || last < first) return false;
  const TokenSpan span{first, last};
  if (normalize_answer(span_text(passage, span)) != normalize_answer(answer_text)) return false;
  *out = span;
  return true;
}

SquadLoadResult parse_squad_json(const std::string& text, const SquadLoadOptions& options) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("malformed JSON at byte {}: {}", e.byte, e.what()));
  }
  SquadLoadResult result;
  try {
    for (const auto& article : doc.at("data")) {
      for (const auto& para : article.at("paragraphs")) {
        auto passage = std::make_shared<const Passage>(make_passage(para.at("context").get<std::string>()));
        for (const auto& qa : para.at("qas")) {
          ++result.questions;
          Example ex;
          ex.id = qa.at("id").get<std::string>();
          ex.question = qa.at("question").get<std::string>();
          ex.question_tokens = tokenize(ex.question).tokens;
          ex.passage = passage;
          ex.adversarial = qa.value("is_adversarial", false);
          const json answers = qa.value("answers", json::array());
          for (const auto& ans : answers) {
            const auto answer_text = ans.at("text").get<std::string>();
            const auto start = ans.at("answer_start").get<long long>();
            ex.gold_texts.push_back(answer_text);
            TokenSpan span;
            if (start < 0 || !align_answer(*passage, static_cast<std::size_t>(start), answer_text, &span)) {
              ++result.dropped_answers;
              continue;
            }
            if (std::find(ex.gold_spans.begin(), ex.gold_spans.end(), span) == ex.gold_spans.end()) {
              ex.gold_spans.push_back(span);
            }
          }
          const bool unlabeled_ok = answers.empty() && options.allow_unlabeled;
          if ((ex.gold_spans.empty() && !unlabeled_ok) || ex.question_tokens.empty() || passage->tokens.empty()) {
            ++result.skipped_questions;
            continue;
          }
          result.examples.push_back(std::move(ex));
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("not a SQuAD v1.1 document: {}", e.what()));
  }
  if (result.dropped_answers > 0 || result.skipped_questions > 0) {
    std::clog << fmt::format("squad: dropped {} unalignable answers, skipped {} of {} questions\n",
                             result.dropped_answers, result.skipped_questions, result.questions);
  }
  return result;
}

SquadLoadResult load_squad_json(const std::string& path, const SquadLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path));
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_squad_json(buf.str(), options);
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
}

std::string to_squad_json(std::span<const Example> examples, const std::string& title) {
  json paragraphs = json::array();
  const Passage* current = nullptr;
  for (const auto& ex : examples) {
    if (ex.passage.get() != current) {
      current = ex.passage.get();
      paragraphs.push_back({{"context", current->raw_context}, {"qas", json::array()}});
    }
    json answers = json::array();
    for (const auto& s : ex.gold_spans) {
      answers.push_back({{"text", span_text(*ex.passage, s)},
                         {"answer_start", ex.passage->offsets[static_cast<std::size_t>(s.start)].begin}});
    }
    json qa = {{"id", ex.id}, {"question", ex.question}, {"answers", answers}};
    if (ex.adversarial) qa["is_adversarial"] = true;
    paragraphs.back()["qas"].push_back(std::move(qa));
  }
  json doc = {{"version", "1.1"}, {"data", json::array({{{"title", title}, {"paragraphs", paragraphs}}})}};
  return doc.dump(1);
}

void write_squad_json(std::span<const Example> examples, const std::string& path, const std::string& title) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path));
  out << to_squad_json(examples, title) << '\n';
}

}  // namespace qadistill
