#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "ssvep/epochs.hpp"

#include "helpers.hpp"

using namespace ssvep;
using test_helpers::make_random_epochs;
using test_helpers::thrown_code;

TEST_CASE("validate: structural invariants") {
  Rng rng(11);
  EpochSet e = make_random_epochs(rng, 3, 2, 4, 16);
  REQUIRE_NOTHROW(validate(e));

  SECTION("label out of range") {
    e.labels[0] = 3;
    REQUIRE(thrown_code([&] { validate(e); }) == "ShapeMismatch");
  }
  SECTION("ragged trial") {
    e.trials[1] = Eigen::MatrixXd::Zero(4, 15);
    REQUIRE(thrown_code([&] { validate(e); }) == "ShapeMismatch");
  }
  SECTION("label count mismatch") {
    e.labels.pop_back();
    REQUIRE(thrown_code([&] { validate(e); }) == "ShapeMismatch");
  }
  SECTION("non-finite sample") {
    e.trials[2](1, 3) = std::nan("");
    REQUIRE(thrown_code([&] { validate(e); }) == "NonFiniteInput");
  }
  SECTION("bad fs") {
    e.fs = 0.0;
    REQUIRE(thrown_code([&] { validate(e); }) == "ShapeMismatch");
  }
}

TEST_CASE("extract_window: index arithmetic") {
  Rng rng(7);
  EpochSet e = make_random_epochs(rng, 2, 2, 3, 1000, 250.0);

  SECTION("latency window at fs 250") {
    EpochSet w = extract_window(e, 0.14, 1.5);
    REQUIRE(w.n_samples() == 375);
    // start = round(0.14 * 250) = 35; output must be a pure slice
    for (int t = 0; t < w.n_trials(); ++t)
      REQUIRE(w.trials[t] == e.trials[t].middleCols(35, 375));
    REQUIRE(w.labels == e.labels);
    REQUIRE(w.fs == e.fs);
    REQUIRE(w.channel_names == e.channel_names);
  }
  SECTION("onset offset shifts the start") {
    EpochSet w = extract_window(e, 0.14, 1.5, 0.5);
    REQUIRE(w.n_samples() == 375);
    for (int t = 0; t < w.n_trials(); ++t)
      REQUIRE(w.trials[t] == e.trials[t].middleCols(160, 375));
  }
  SECTION("identity window") {
    EpochSet w = extract_window(e, 0.0, e.n_samples() / e.fs);
    REQUIRE(test_helpers::same_tensor(w, e));
  }
  SECTION("window past the end") {
    REQUIRE(thrown_code([&] { extract_window(e, 0.14, 4.0); }) ==
            "WindowOutOfRange");
  }
}

TEST_CASE("select_channels") {
  Rng rng(13);
  EpochSet e = make_random_epochs(rng, 2, 2, 5, 32);

  SECTION("same order is identity") {
    EpochSet s = select_channels(e, e.channel_names);
    REQUIRE(test_helpers::same_tensor(s, e));
  }
  SECTION("reversed order reverses the channel axis") {
    std::vector<std::string> rev(e.channel_names.rbegin(),
                                 e.channel_names.rend());
    EpochSet s = select_channels(e, rev);
    for (int t = 0; t < e.n_trials(); ++t)
      REQUIRE(s.trials[t] == e.trials[t].colwise().reverse());
  }
  SECTION("unknown channel") {
    REQUIRE(thrown_code([&] { select_channels(e, {"CH1", "XX"}); }) ==
            "UnknownChannel");
  }
}

TEST_CASE("select_channels: subset gather from a large montage") {
  // 64-channel set; selecting the 8 occipital names must gather exactly the
  // matching rows, verified against an index map built independently here.
  Rng rng(17);
  EpochSet e = make_random_epochs(rng, 2, 1, 64, 20);
  const auto& occ = occipital_channels();
  for (std::size_t i = 0; i < occ.size(); ++i)
    e.channel_names[10 + 3 * i] = occ[i];  // scatter the names around

  EpochSet s = select_channels(e, occ);
  REQUIRE(s.n_channels() == 8);
  REQUIRE(s.channel_names == occ);
  for (int t = 0; t < e.n_trials(); ++t)
    for (std::size_t i = 0; i < occ.size(); ++i) {
      int src_row = -1;
      for (int r = 0; r < 64; ++r)
        if (e.channel_names[r] == occ[i]) src_row = r;
      REQUIRE(s.trials[t].row(static_cast<int>(i)) == e.trials[t].row(src_row));
    }
}

TEST_CASE("split_calibration_test: counts and partition") {
  Rng rng(23);
  EpochSet e = make_random_epochs(rng, 4, 6, 3, 16);

  SECTION("first_n keeps storage order") {
    auto [calib, test] = split_calibration_test(e, 4);
    REQUIRE(calib.n_trials() == 16);
    REQUIRE(test.n_trials() == 8);
    for (int k = 0; k < 4; ++k) {
      REQUIRE(trials_for_stimulus(calib, k).size() == 4);
      REQUIRE(trials_for_stimulus(test, k).size() == 2);
    }
    // Partition: ids of calib and test together equal all input ids.
    EpochSet tagged = e;
    ensure_trial_ids(tagged);
    std::set<std::string> all(tagged.trial_ids.begin(), tagged.trial_ids.end());
    std::set<std::string> seen;
    for (const auto& id : calib.trial_ids) REQUIRE(seen.insert(id).second);
    for (const auto& id : test.trial_ids) REQUIRE(seen.insert(id).second);
    REQUIRE(seen == all);
  }
  SECTION("n_calib = total - 2 leaves two test trials per stimulus") {
    auto [calib, test] = split_calibration_test(e, 4);
    for (int k = 0; k < 4; ++k)
      REQUIRE(trials_for_stimulus(test, k).size() == 2);
  }
  SECTION("seeded shuffle is deterministic") {
    auto a = split_calibration_test(e, 3, SplitOrder::kSeededShuffle, 99);
    auto b = split_calibration_test(e, 3, SplitOrder::kSeededShuffle, 99);
    REQUIRE(a.first.trial_ids == b.first.trial_ids);
    REQUIRE(a.second.trial_ids == b.second.trial_ids);
    auto c = split_calibration_test(e, 3, SplitOrder::kSeededShuffle, 100);
    REQUIRE(a.first.trial_ids != c.first.trial_ids);  // 24 trials; collision
                                                      // odds are negligible
  }
  SECTION("calibration below the minimum") {
    REQUIRE(thrown_code([&] { split_calibration_test(e, 1); }) ==
            "CalibTooSmall");
  }
  SECTION("stimulus without enough trials") {
    REQUIRE(thrown_code([&] { split_calibration_test(e, 6); }) ==
            "InsufficientTrials");
  }
}
