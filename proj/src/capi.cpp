#include "lrc/lrc.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "lrc/error.hpp"
#include "lrc/eval.hpp"
#include "lrc/infer.hpp"
#include "lrc/inspect.hpp"
#include "lrc/pipeline.hpp"
#include "lrc/store.hpp"

struct lrc_store {
  lrc::WeightStore store;
};

static_assert(static_cast<int>(lrc::ErrorKind::MissingWeight) == LRC_KIND_MISSING_WEIGHT);
static_assert(static_cast<int>(lrc::ErrorKind::InvalidArgument) == LRC_KIND_INVALID_ARGUMENT);

namespace {

thread_local std::string g_last_error;
thread_local lrc_error_kind g_last_kind = LRC_KIND_NONE;

lrc_status status_for(lrc::ErrorKind kind) {
  using lrc::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return LRC_ERR_INVALID_ARGUMENT;
    case ErrorKind::Io: return LRC_ERR_IO;
    case ErrorKind::TruncatedHeader:
    case ErrorKind::TruncatedManifest:
    case ErrorKind::MalformedManifest:
    case ErrorKind::UnsupportedDtype:
    case ErrorKind::TruncatedBlob:
    case ErrorKind::LengthMismatch:
    case ErrorKind::ParseError: return LRC_ERR_FORMAT;
    case ErrorKind::NameCollision:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::EmptySelection:
    case ErrorKind::MissingWeight: return LRC_ERR_DATA;
    case ErrorKind::NonFinite:
    case ErrorKind::NonConvergence: return LRC_ERR_NUMERIC;
  }
  return LRC_ERR_INTERNAL;
}

lrc_status fail(lrc_status status, lrc_error_kind kind, std::string message) {
  g_last_error = std::move(message);
  g_last_kind = kind;
  return status;
}

template <typename Fn>
lrc_status guarded(Fn&& fn) {
  g_last_error.clear();
  g_last_kind = LRC_KIND_NONE;
  try {
    fn();
    return LRC_OK;
  } catch (const lrc::Error& e) {
    return fail(status_for(e.kind()), static_cast<lrc_error_kind>(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(LRC_ERR_INTERNAL, LRC_KIND_NONE, "out of memory");
  } catch (const std::exception& e) {
    return fail(LRC_ERR_INTERNAL, LRC_KIND_NONE, e.what());
  } catch (...) {
    return fail(LRC_ERR_INTERNAL, LRC_KIND_NONE, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw lrc::Error(lrc::ErrorKind::InvalidArgument, what);
}

const lrc::StoreEntry& entry_at(const lrc_store* store, size_t index) {
  require(store != nullptr, "store is null");
  require(index < store->store.size(), "entry index out of range");
  return store->store.entries()[index];
}

}  // namespace

extern "C" {

const char* lrc_version(void) { return "0.1.0"; }

const char* lrc_last_error(void) { return g_last_error.c_str(); }

lrc_error_kind lrc_last_error_kind(void) { return g_last_kind; }

void lrc_string_free(char* s) { std::free(s); }

lrc_status lrc_store_create(lrc_store** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new lrc_store{};
  });
}

lrc_status lrc_store_load(const char* path, lrc_store** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "path and out must be non-null");
    *out = nullptr;
    auto loaded = lrc::load_store(path);
    *out = new lrc_store{std::move(loaded)};
  });
}

lrc_status lrc_store_save(const lrc_store* store, const char* path, uint64_t* bytes_written) {
  return guarded([&] {
    require(store != nullptr && path != nullptr, "store and path must be non-null");
    const auto n = lrc::save_store(store->store, path);
    if (bytes_written) *bytes_written = n;
  });
}

void lrc_store_free(lrc_store* store) { delete store; }

lrc_status lrc_store_add(lrc_store* store, const char* name, const int64_t* shape, size_t rank, const float* data,
                         const char* role) {
  return guarded([&] {
    require(store != nullptr && name != nullptr && shape != nullptr && rank > 0, "invalid tensor arguments");
    lrc::Shape dims(shape, shape + rank);
    const auto n = lrc::shape_numel(dims);
    require(data != nullptr || n == 0, "data is null");
    lrc::Tensor t(std::move(dims), std::vector<float>(data, data + n));
    store->store.add(name, std::move(t), role ? lrc::role_from_string(role) : lrc::Role::Other);
  });
}

lrc_status lrc_store_set_metadata(lrc_store* store, const char* key, const char* value) {
  return guarded([&] {
    require(store != nullptr && key != nullptr && value != nullptr, "null argument");
    store->store.metadata()[key] = value;
  });
}

size_t lrc_store_size(const lrc_store* store) { return store ? store->store.size() : 0; }

lrc_status lrc_store_entry(const lrc_store* store, size_t index, const char** name, const char** role,
                           size_t* rank) {
  return guarded([&] {
    const auto& e = entry_at(store, index);
    if (name) *name = e.name.c_str();
    if (role) *role = lrc::to_string(e.role);
    if (rank) *rank = e.tensor.shape().size();
  });
}

lrc_status lrc_store_entry_shape(const lrc_store* store, size_t index, int64_t* shape, size_t capacity) {
  return guarded([&] {
    const auto& e = entry_at(store, index);
    require(shape != nullptr && capacity >= e.tensor.shape().size(), "shape buffer too small");
    std::copy(e.tensor.shape().begin(), e.tensor.shape().end(), shape);
  });
}

lrc_status lrc_store_entry_data(const lrc_store* store, size_t index, const float** data, size_t* count) {
  return guarded([&] {
    const auto& e = entry_at(store, index);
    require(data != nullptr, "data is null");
    *data = e.tensor.data().data();
    if (count) *count = e.tensor.data().size();
  });
}

lrc_status lrc_store_serialized_size(const lrc_store* store, uint64_t* bytes) {
  return guarded([&] {
    require(store != nullptr && bytes != nullptr, "null argument");
    *bytes = lrc::serialize_store(store->store).size();
  });
}

lrc_status lrc_store_inspect(const lrc_store* store, char** json, char** text) {
  return guarded([&] {
    require(store != nullptr, "store is null");
    if (json) *json = nullptr;
    if (text) *text = nullptr;
    std::string j = json ? lrc::inspect_json(store->store) : std::string();
    std::string t = text ? lrc::inspect_text(store->store) : std::string();
    if (json) *json = dup_string(j);
    if (text) *text = dup_string(t);
  });
}

lrc_status lrc_compress(const lrc_store* in, const char* config_json, lrc_store** out, char** report_json,
                        char** report_text) {
  return guarded([&] {
    require(in != nullptr && config_json != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    const auto config = lrc::parse_compression_config(config_json);
    auto [result, report] = lrc::run_pipeline(in->store, config);
    const auto j = report_json ? lrc::compression_report_json(report) : std::string();
    const auto t = report_text ? lrc::compression_report_table(report) : std::string();
    auto handle = std::make_unique<lrc_store>(lrc_store{std::move(result)});
    char* json = report_json ? dup_string(j) : nullptr;
    try {
      if (report_text) *report_text = dup_string(t);
    } catch (...) {
      std::free(json);
      throw;
    }
    if (report_json) *report_json = json;
    *out = handle.release();
  });
}

lrc_status lrc_evaluate_dirs(const char* labels_dir, const char* preds_dir, double iou_threshold, int eleven_point,
                             char** report_json) {
  return guarded([&] {
    require(labels_dir != nullptr && preds_dir != nullptr && report_json != nullptr, "null argument");
    const auto gts = lrc::load_labels(labels_dir);
    const auto dets = lrc::load_predictions(preds_dir);
    const auto report = lrc::evaluate(dets, gts, iou_threshold,
                                      eleven_point ? lrc::Interpolation::ElevenPoint : lrc::Interpolation::AllPoints);
    *report_json = dup_string(lrc::eval_report_json(report));
  });
}

lrc_status lrc_benchmark(const char* network_json, const lrc_store* weights, int64_t channels, int64_t height,
                         int64_t width, int runs, int warmup, char** result_json) {
  return guarded([&] {
    require(network_json != nullptr && weights != nullptr && result_json != nullptr, "null argument");
    const auto layers = lrc::parse_network(network_json);
    const auto result = lrc::benchmark(layers, weights->store, channels, height, width, runs, warmup);
    *result_json = dup_string(lrc::bench_result_json(result));
  });
}

}  // extern "C"
