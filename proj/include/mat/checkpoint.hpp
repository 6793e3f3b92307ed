#pragma once

#include "mat/adam.hpp"
#include "mat/records.hpp"

// Checkpoints hold every named parameter, both optimizers' moments and step
// counters, both RNG streams and the global sample counter, in registry
// order. Loading into a freshly built model of the same configuration
// restores forward outputs bit-exactly.

namespace mat {

namespace ckptdetail {

template <typename T>
Record tensor_record(const std::string& name, const Tensor<T>& t) {
  if constexpr (sizeof(T) == 4)
    return Record::from_f32(name, t.shape(), t.data());
  else
    return Record::from_f64(name, t.shape(), t.data());
}

template <typename T>
Record buffer_record(const std::string& name, const std::vector<T>& v) {
  Shape s{static_cast<int64_t>(v.size())};
  if constexpr (sizeof(T) == 4)
    return Record::from_f32(name, s, std::span<const float>(v));
  else
    return Record::from_f64(name, s, std::span<const double>(v));
}

template <typename T>
std::vector<T> record_values(const Record& r) {
  if constexpr (sizeof(T) == 4)
    return r.as_f32();
  else
    return r.as_f64();
}

template <typename T>
void restore_tensor(const Record& r, Tensor<T>& t) {
  check(r.shape == t.shape(), "checkpoint: shape of " + r.name + " is " + shape_str(r.shape) +
                                  ", expected " + shape_str(t.shape()));
  std::vector<T> v = record_values<T>(r);
  std::copy(v.begin(), v.end(), t.data().begin());
}

}  // namespace ckptdetail

template <typename T>
struct TrainCheckpoint {
  NamedParams<T>* g_params = nullptr;
  NamedParams<T>* d_params = nullptr;
  Adam<T>* opt_g = nullptr;
  Adam<T>* opt_d = nullptr;
  Rng* rng_data = nullptr;
  Rng* rng_model = nullptr;
  int64_t* sample_counter = nullptr;
};

template <typename T>
void save_checkpoint(const std::string& path, const TrainCheckpoint<T>& st,
                     const std::string& config_text = "") {
  using namespace ckptdetail;
  std::vector<Record> recs;
  if (!config_text.empty()) recs.push_back(Record::from_bytes("config", config_text));
  for (const auto& [name, t] : st.g_params->items) recs.push_back(tensor_record("param/" + name, t));
  for (const auto& [name, t] : st.d_params->items) recs.push_back(tensor_record("param/" + name, t));
  auto dump_opt = [&](const char* tag, Adam<T>* opt, NamedParams<T>* ps) {
    auto& slots = opt->slots();
    for (size_t i = 0; i < ps->items.size(); ++i) {
      recs.push_back(buffer_record(std::string("adam_") + tag + "/m/" + ps->items[i].first,
                                   slots[i].m));
      recs.push_back(buffer_record(std::string("adam_") + tag + "/v/" + ps->items[i].first,
                                   slots[i].v));
    }
    recs.push_back(Record::from_u64(std::string("adam_") + tag + "/t",
                                    static_cast<uint64_t>(opt->step_count())));
  };
  dump_opt("g", st.opt_g, st.g_params);
  dump_opt("d", st.opt_d, st.d_params);
  recs.push_back(Record::from_bytes("rng/data", st.rng_data->state()));
  recs.push_back(Record::from_bytes("rng/model", st.rng_model->state()));
  recs.push_back(Record::from_u64("meta/samples", static_cast<uint64_t>(*st.sample_counter)));
  write_records(path, recs);
}

template <typename T>
void load_checkpoint(const std::string& path, const TrainCheckpoint<T>& st) {
  using namespace ckptdetail;
  std::vector<Record> recs = read_records(path);
  for (auto& [name, t] : st.g_params->items) restore_tensor(find_record(recs, "param/" + name), t);
  for (auto& [name, t] : st.d_params->items) restore_tensor(find_record(recs, "param/" + name), t);
  auto load_opt = [&](const char* tag, Adam<T>* opt, NamedParams<T>* ps) {
    auto& slots = opt->slots();
    for (size_t i = 0; i < ps->items.size(); ++i) {
      auto m = record_values<T>(find_record(recs, std::string("adam_") + tag + "/m/" + ps->items[i].first));
      auto v = record_values<T>(find_record(recs, std::string("adam_") + tag + "/v/" + ps->items[i].first));
      check(m.size() == slots[i].m.size() && v.size() == slots[i].v.size(),
            "checkpoint: optimizer slot size mismatch for " + ps->items[i].first);
      slots[i].m = std::move(m);
      slots[i].v = std::move(v);
    }
    opt->set_step_count(
        static_cast<int64_t>(find_record(recs, std::string("adam_") + tag + "/t").as_u64()));
  };
  load_opt("g", st.opt_g, st.g_params);
  load_opt("d", st.opt_d, st.d_params);
  st.rng_data->set_state(find_record(recs, "rng/data").as_string());
  st.rng_model->set_state(find_record(recs, "rng/model").as_string());
  *st.sample_counter = static_cast<int64_t>(find_record(recs, "meta/samples").as_u64());
}

// parameters only (enough for inference)
template <typename T>
void save_params(const std::string& path, const NamedParams<T>& params) {
  std::vector<Record> recs;
  for (const auto& [name, t] : params.items)
    recs.push_back(ckptdetail::tensor_record("param/" + name, t));
  write_records(path, recs);
}

template <typename T>
void load_params(const std::string& path, NamedParams<T>& params) {
  std::vector<Record> recs = read_records(path);
  for (auto& [name, t] : params.items)
    ckptdetail::restore_tensor(find_record(recs, "param/" + name), t);
}

}  // namespace mat
