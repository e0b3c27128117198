// Trains an alignment adapter on a small synthetic corpus and reports
// held-out accuracy before and after.
#include <cstdio>

#include <skipreward/evaluation.hpp>
#include <skipreward/training.hpp>

using namespace skipreward;

namespace {

double heldout_accuracy(const RewardModel<float>& model, const std::vector<PairExample>& pairs) {
  std::vector<PairRecord> recs;
  for (const auto& p : pairs) {
    const double sc = model.score(p.prompt, p.chosen, p.perspective).scalar();
    const double sr = model.score(p.rejected_leg_prompt(), p.rejected, p.perspective).scalar();
    recs.push_back({sc - sr, Judgment::chosen});
  }
  return accuracy_with_ties(recs, 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  const int n_train = argc > 1 ? std::atoi(argv[1]) : 400;
  CorpusSpec spec;
  spec.n_corruption_levels = 1;
  spec.position_jitter = false;
  const Corpus train_set = gen_synthetic_corpus(1, n_train, spec);
  const Corpus test_set = gen_synthetic_corpus(2, 200, spec);

  auto model = RewardModel<float>::random(ModelConfig{}, 3);
  model.add_perspective(Perspective::alignment, HeadConfig{}, 4);
  const auto sel = trainable_params(model, Perspective::alignment);
  std::printf("trainable %zu of %zu parameters (%.2f%%)\n", sel.trainable, sel.total, 100.0 * sel.fraction());
  std::printf("held-out accuracy before: %.3f\n", heldout_accuracy(model, test_set.pairs));

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.grad_accum = 1;
  const auto state = train(model, Perspective::alignment, train_set.pairs, tc);
  std::printf("%zu optimizer steps, last loss %.4f\n", state.step, state.history.back().loss);
  std::printf("held-out accuracy after:  %.3f\n", heldout_accuracy(model, test_set.pairs));

  const auto& ex = test_set.pairs.front();
  std::printf("'%s': chosen %.3f, rejected %.3f\n", ex.prompt.raw.c_str(),
              model.score(ex.prompt, ex.chosen, Perspective::alignment).scalar(),
              model.score(ex.prompt, ex.rejected, Perspective::alignment).scalar());
}
