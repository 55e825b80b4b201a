#include "s2rl/datastore.hpp"

#include <cmath>
#include <fstream>

#include "s2rl/errors.hpp"

namespace s2rl::datastore {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValidationError("replay buffer: capacity must be positive");
    ring_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
    ring_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
    ++inserted_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) {
        throw ValidationError("replay buffer: index " + std::to_string(i) + " out of range " +
                              std::to_string(size_));
    }
    std::size_t oldest = (head_ + capacity_ - size_) % capacity_;
    return ring_[(oldest + i) % capacity_];
}

std::vector<Transition> ReplayBuffer::to_vector() const {
    std::vector<Transition> out;
    out.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
    return out;
}

std::vector<Transition> sample_batch(const ReplayBuffer& buffer, int batch_size,
                                     RandomStream& rng) {
    if (buffer.empty()) throw ValidationError("sample_batch: buffer is empty");
    if (batch_size <= 0) throw ValidationError("sample_batch: batch size must be positive");
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        out.push_back(buffer.at(rng.uniform_int(buffer.size())));
    }
    return out;
}

Batch stack(const std::vector<Transition>& rows) {
    if (rows.empty()) throw ValidationError("stack: empty batch");
    const int n = static_cast<int>(rows.size());
    const int ds = static_cast<int>(rows[0].s.numel());
    const int da = static_cast<int>(rows[0].a.numel());
    Batch b{Array({n, ds}), Array({n, da}), Array({n, 1}), Array({n, ds}), Array({n, 1})};
    for (int i = 0; i < n; ++i) {
        const Transition& t = rows[static_cast<std::size_t>(i)];
        if (static_cast<int>(t.s.numel()) != ds || static_cast<int>(t.s_next.numel()) != ds ||
            static_cast<int>(t.a.numel()) != da) {
            throw DimensionError("stack: inconsistent transition shapes at row " +
                                 std::to_string(i));
        }
        for (int k = 0; k < ds; ++k) {
            b.s.at(i, k) = t.s.at(static_cast<std::size_t>(k));
            b.s_next.at(i, k) = t.s_next.at(static_cast<std::size_t>(k));
        }
        for (int k = 0; k < da; ++k) b.a.at(i, k) = t.a.at(static_cast<std::size_t>(k));
        b.r.at(i, 0) = t.r;
        b.done.at(i, 0) = t.done ? 1.0 : 0.0;
    }
    return b;
}

std::vector<Transition> collect_episodes(const envsim::Environment& env, const Policy& policy,
                                         int n_episodes, RandomStream& rng) {
    if (n_episodes < 0) throw ValidationError("collect_episodes: negative episode count");
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(n_episodes) * env.spec().horizon);
    std::uint64_t run_key = rng.raw();
    for (int ep = 0; ep < n_episodes; ++ep) {
        RandomStream ep_rng = rng.split(run_key, static_cast<std::uint64_t>(ep));
        envsim::EnvState st = env.reset(ep_rng);
        for (int i = 0; i < env.spec().horizon; ++i) {
            Array a = policy(st.observation, ep_rng);
            envsim::StepResult r = env.step(st, a);
            out.push_back(Transition{st.observation, a, r.reward, r.next_state.observation,
                                     r.done});
            st = r.next_state;
        }
    }
    return out;
}

nlohmann::json DatasetManifest::to_json() const {
    return {{"env_spec", env_spec.to_kv()},
            {"generator", generator},
            {"transition_count", transition_count},
            {"policy_return_mean", policy_return_mean},
            {"policy_return_std", policy_return_std},
            {"format_version", format_version}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.env_spec = envsim::EnvSpec::from_kv(j.at("env_spec").get<std::string>());
    m.generator = j.at("generator").get<std::string>();
    m.transition_count = j.at("transition_count").get<std::int64_t>();
    m.policy_return_mean = j.at("policy_return_mean").get<double>();
    m.policy_return_std = j.at("policy_return_std").get<double>();
    m.format_version = j.at("format_version").get<std::uint32_t>();
    return m;
}

void save_dataset(const std::string& path, const std::vector<Transition>& transitions,
                  const DatasetManifest& manifest) {
    if (static_cast<std::int64_t>(transitions.size()) != manifest.transition_count) {
        throw ValidationError("save_dataset: manifest count " +
                              std::to_string(manifest.transition_count) + " != rows " +
                              std::to_string(transitions.size()));
    }
    Batch b = stack(transitions);
    Blob blob;
    blob.meta = manifest.to_json();
    blob.arrays = {{"s", b.s}, {"a", b.a}, {"r", b.r}, {"s_next", b.s_next}, {"done", b.done}};
    write_container(path, blob);
}

std::pair<std::vector<Transition>, DatasetManifest> load_dataset(const std::string& path) {
    Blob blob = read_container(path);
    DatasetManifest m = DatasetManifest::from_json(blob.meta);
    const Array& s = blob.get("s");
    const Array& a = blob.get("a");
    const Array& r = blob.get("r");
    const Array& s2 = blob.get("s_next");
    const Array& done = blob.get("done");

    envsim::Environment env = envsim::make_env(m.env_spec);
    if (s.cols() != env.obs_dim() || s2.cols() != env.obs_dim()) {
        throw DimensionError("load_dataset: stored observations have " +
                             std::to_string(s.cols()) + " dims, env spec expects " +
                             std::to_string(env.obs_dim()));
    }
    if (a.cols() != env.action_dim()) {
        throw DimensionError("load_dataset: stored actions have " + std::to_string(a.cols()) +
                             " dims, env spec expects " + std::to_string(env.action_dim()));
    }
    const int n = s.rows();
    if (n != static_cast<int>(m.transition_count) || r.rows() != n || done.rows() != n) {
        throw IoError("load_dataset: row counts disagree with the manifest");
    }

    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.s = Array({env.obs_dim()});
        t.s_next = Array({env.obs_dim()});
        t.a = Array({env.action_dim()});
        for (int k = 0; k < env.obs_dim(); ++k) {
            t.s.at(static_cast<std::size_t>(k)) = s.at(i, k);
            t.s_next.at(static_cast<std::size_t>(k)) = s2.at(i, k);
        }
        for (int k = 0; k < env.action_dim(); ++k) {
            t.a.at(static_cast<std::size_t>(k)) = a.at(i, k);
        }
        t.r = r.at(i, 0);
        t.done = done.at(i, 0) != 0.0;
        if (!t.s.all_finite() || !t.a.all_finite() || !t.s_next.all_finite() ||
            !std::isfinite(t.r)) {
            throw NumericError("load_dataset: non-finite values at row " + std::to_string(i));
        }
        out.push_back(std::move(t));
    }
    // record the verified file checksum in the returned manifest
    std::ifstream f(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    m.checksum = fnv1a(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 8);
    return {std::move(out), m};
}

}  // namespace s2rl::datastore
