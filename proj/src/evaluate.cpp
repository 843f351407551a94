#include "recert/error.hpp"
#include "recert/train.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace recert {

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::normal: return "normal";
    case Metric::certified: return "certified";
    case Metric::exhaustive: return "exhaustive";
  }
  return "?";
}

Metric parse_metric(const std::string& text) {
  for (Metric m : {Metric::normal, Metric::certified, Metric::exhaustive}) {
    if (to_string(m) == text) return m;
  }
  throw Error("unknown metric '" + text + "'");
}

namespace {

bool wants(const EvalOptions& options, Metric m) {
  return std::find(options.metrics.begin(), options.metrics.end(), m) != options.metrics.end();
}

ExampleOutcome evaluate_one(const Example& ex, const PerturbationSpace& space,
                            const ModelParams& params, const Vocabulary& vocab,
                            const EvalOptions& options) {
  ExampleOutcome out;
  const std::vector<TokenId> ids = vocab.encode(ex.tokens);
  out.normal_correct = loss_margin(forward_concrete(params, ids), ex.label) < 0.0;
  if (wants(options, Metric::certified)) {
    try {
      out.cert = certify(space, ex.tokens, ex.label, params, vocab);
    } catch (const PositionRangeError& e) {
      out.error = e.what();
    }
  }
  if (wants(options, Metric::exhaustive)) {
    try {
      const auto members = enumerate_space(space, ex.tokens, options.enumeration_cap);
      out.space_size = members.size();
      bool all = true;
      for (const PerturbedString& z : members) {
        if (loss_margin(forward_concrete(params, vocab.encode(z.tokens)), ex.label) >= 0.0) {
          all = false;
          break;
        }
      }
      out.exhaustive_correct = all;
    } catch (const EnumerationLimit& e) {
      out.exhaustive_correct = false;
      out.error = e.what();
    } catch (const PositionRangeError& e) {
      out.exhaustive_correct = false;
      out.error = e.what();
    }
  }
  return out;
}

}  // namespace

std::vector<ExampleOutcome> evaluate_examples(const Dataset& data, const PerturbationSpace& space,
                                              const ModelParams& params, const Vocabulary& vocab,
                                              const EvalOptions& options) {
  const std::size_t n = data.examples.size();
  std::vector<ExampleOutcome> outcomes(n);
  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) {
      outcomes[k] = evaluate_one(data.examples[k], space, params, vocab, options);
    }
    return outcomes;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) {
          try {
            outcomes[k] = evaluate_one(data.examples[k], space, params, vocab, options);
          } catch (...) {
            std::lock_guard lock(failure_lock);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return outcomes;
}

Metrics summarize(std::span<const ExampleOutcome> outcomes, std::span<const Metric> metrics) {
  Metrics m;
  m.total = outcomes.size();
  for (const ExampleOutcome& o : outcomes) {
    m.normal_correct += o.normal_correct ? 1 : 0;
    m.certified += o.cert && o.cert->verdict == Verdict::certified ? 1 : 0;
    m.exhaustive_correct += o.exhaustive_correct.value_or(false) ? 1 : 0;
    m.failures += o.error.empty() ? 0 : 1;
  }
  const double total = m.total == 0 ? 1.0 : static_cast<double>(m.total);
  for (Metric metric : metrics) {
    switch (metric) {
      case Metric::normal: m.normal_acc = static_cast<double>(m.normal_correct) / total; break;
      case Metric::certified: m.certified_acc = static_cast<double>(m.certified) / total; break;
      case Metric::exhaustive:
        m.exhaustive_acc = static_cast<double>(m.exhaustive_correct) / total;
        break;
    }
  }
  return m;
}

Metrics evaluate(const Dataset& data, const PerturbationSpace& space, const ModelParams& params,
                 const Vocabulary& vocab, const EvalOptions& options) {
  return summarize(evaluate_examples(data, space, params, vocab, options), options.metrics);
}

}  // namespace recert
