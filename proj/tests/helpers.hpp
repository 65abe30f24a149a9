#pragma once

#include "railsched/demand.hpp"
#include "railsched/model.hpp"
#include "railsched/network.hpp"

namespace testutil {

using namespace railsched;

// Small line-network fixture with sampled demand and a nominal initial state.
struct Toy {
  net::Network netw;
  demand::DemandScenario sc;
  model::InitialCondition init;
  SlotIdx k0 = 0;

  struct Options {
    int stations = 2;
    double rate = 0.3;
    double peak_rate = -1;  // defaults to rate
    std::uint64_t seed = 7;
    bool single_sigma = false;  // depot linked to platform 1 only
    double e_add = 5.0;
    int n_train = 8;
  };

  Toy() : Toy(Options{}) {}

  explicit Toy(Options o) {
    net::LineNetworkSpec spec;
    spec.stations = o.stations;
    spec.n_train = o.n_train;
    spec.e_add = o.e_add;
    netw = net::make_line_network(spec);
    if (o.single_sigma) {
      const PlatformId drop = 2 * o.stations;
      for (auto& p : netw.platforms)
        if (p.id == drop) {
          p.sigma = false;
          p.depot_id.reset();
        }
      netw.depots[0].platform_ids = {1};
    }
    auto prof = demand::make_peak_profile(netw, o.rate, o.peak_rate < 0 ? o.rate : o.peak_rate,
                                          12, 4.0);
    sc = demand::sample_scenario(prof, o.seed);
    init = model::InitialCondition::nominal(netw);
    k0 = netw.link_delta(1) + 1;
  }

  model::BuildInputs inputs(int n_steps,
                            model::ObjectiveMode mode = model::ObjectiveMode::Linearized) const {
    model::BuildInputs in;
    in.network = &netw;
    in.scenario = &sc;
    in.k0 = k0;
    in.n_steps = n_steps;
    in.mode = mode;
    in.init = &init;
    return in;
  }
};

}  // namespace testutil
