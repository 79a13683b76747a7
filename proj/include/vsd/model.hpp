#pragma once

#include <string>

#include "vsd/errors.hpp"
#include "vsd/heads.hpp"
#include "vsd/vit.hpp"

namespace vsd {

struct ModelConfig {
  EncoderConfig encoder;
  int num_prototypes = 256;
  int proj_hidden = 256;
  int proj_bottleneck = 64;
  int predictor_hidden = 128;
  int predictor_blocks = 2;
};

/// Online network: backbone plus next-frame predictor plus projection head.
/// Only backbone and projection are mirrored into the teacher.
template <class S>
struct StudentModel {
  Vit<S> backbone;
  PredictorHead<S> predictor;
  ProjectionHead<S> projection;

  explicit StudentModel(const ModelConfig& cfg)
      : backbone(cfg.encoder, "backbone"),
        predictor("predictor", cfg.encoder.embed_dim, cfg.predictor_hidden,
                  cfg.predictor_blocks, cfg.encoder.heads, cfg.encoder.mlp_ratio),
        projection("projection", cfg.encoder.embed_dim, cfg.proj_hidden,
                   cfg.proj_bottleneck, cfg.num_prototypes) {}

  void init(Rng& rng) {
    backbone.init(rng);
    predictor.init(rng);
    projection.init(rng);
  }

  template <class F>
  void visit(F&& f) {
    backbone.visit(f);
    predictor.visit(f);
    projection.visit(f);
  }

  /// The subset the teacher tracks (everything except the predictor).
  template <class F>
  void visit_shared(F&& f) {
    backbone.visit(f);
    projection.visit(f);
  }
};

/// Momentum network: backbone plus projection head, updated only by EMA.
template <class S>
struct TeacherModel {
  Vit<S> backbone;
  ProjectionHead<S> projection;

  explicit TeacherModel(const ModelConfig& cfg)
      : backbone(cfg.encoder, "backbone"),
        projection("projection", cfg.encoder.embed_dim, cfg.proj_hidden,
                   cfg.proj_bottleneck, cfg.num_prototypes) {}

  template <class F>
  void visit(F&& f) {
    backbone.visit(f);
    projection.visit(f);
  }
};

/// Initializes the teacher as an exact copy of the student's shared subset.
template <class S>
void copy_shared_to_teacher(StudentModel<S>& student, TeacherModel<S>& teacher) {
  auto src = [&] {
    std::vector<Param<S>*> v;
    student.visit_shared([&](Param<S>& p) { v.push_back(&p); });
    return v;
  }();
  auto dst = collect_params<S>(teacher);
  if (src.size() != dst.size())
    throw ParamTreeMismatch("student shared subset has " + std::to_string(src.size()) +
                            " tensors, teacher has " + std::to_string(dst.size()));
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name)
      throw ParamTreeMismatch("tensor " + std::to_string(i) + ": " + src[i]->name +
                              " vs " + dst[i]->name);
    dst[i]->value = src[i]->value;
  }
}

}  // namespace vsd
