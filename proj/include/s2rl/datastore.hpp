#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "s2rl/envsim.hpp"
#include "s2rl/rng.hpp"
#include "s2rl/serialize.hpp"

namespace s2rl::datastore {

using numgrad::Array;

// One environment step; the atom of every dataset in the project.
struct Transition {
    Array s;
    Array a;
    double r = 0.0;
    Array s_next;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

// Bounded FIFO store. Oldest entries are evicted first; the insertion
// counter keeps running totals for bookkeeping even after eviction.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    bool empty() const { return size_ == 0; }

    // i = 0 is the oldest retained transition.
    const Transition& at(std::size_t i) const;

    std::vector<Transition> to_vector() const;

private:
    std::size_t capacity_;
    std::vector<Transition> ring_;
    std::size_t head_ = 0;  // next write slot
    std::size_t size_ = 0;
    std::uint64_t inserted_ = 0;
};

// Uniform with replacement; throws on an empty buffer.
std::vector<Transition> sample_batch(const ReplayBuffer& buffer, int batch_size,
                                     RandomStream& rng);

// Stacks a batch into row-major matrices (S, A, R, S', done) for training.
struct Batch {
    Array s;
    Array a;
    Array r;       // {n,1}
    Array s_next;
    Array done;    // {n,1}, 0/1
    int size() const { return s.rows(); }
};
Batch stack(const std::vector<Transition>& rows);

using Policy = std::function<Array(const Array& observation, RandomStream& rng)>;

// Runs whole episodes with per-episode RNG substreams; transitions are
// returned in episode order, each episode's last row has done=true.
std::vector<Transition> collect_episodes(const envsim::Environment& env, const Policy& policy,
                                         int n_episodes, RandomStream& rng);

struct DatasetManifest {
    envsim::EnvSpec env_spec;
    std::string generator;  // medium | medium-replay | random | expert
    std::int64_t transition_count = 0;
    double policy_return_mean = 0.0;
    double policy_return_std = 0.0;
    std::uint32_t format_version = kFormatVersion;
    std::uint64_t checksum = 0;  // filled when the file is read back

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

void save_dataset(const std::string& path, const std::vector<Transition>& transitions,
                  const DatasetManifest& manifest);
std::pair<std::vector<Transition>, DatasetManifest> load_dataset(const std::string& path);

}  // namespace s2rl::datastore
