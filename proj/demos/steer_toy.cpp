// Compares plain ancestral sampling with particle steering toward one mode of
// the four-mode toy process.
#include <cstdio>

#include <skipreward/fk_steering.hpp>

using namespace skipreward;

int main() {
  const ToyDiffusion process = ToyDiffusion::four_modes();
  const RewardFn reward = distance_reward({2.0, 2.0});
  const int n = 200;
  for (int k : {1, 2, 4, 8}) {
    SteeringConfig cfg;
    cfg.k = k;
    double mean = 0.0;
    int near_target = 0;
    for (int s = 0; s < n; ++s) {
      const SteerResult r = smc_steer(process, cfg, reward, s);
      mean += r.reward / n;
      near_target += r.reward > -2.0;
    }
    std::printf("k=%d  mean reward %.3f  near target %d/%d\n", k, mean, near_target, n);
  }
}
