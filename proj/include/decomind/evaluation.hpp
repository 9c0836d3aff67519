#pragma once

// Two-classifier scoring of a generated design against the request.

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "decomind/errors.hpp"
#include "decomind/generation.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"

namespace decomind {

/// Image classifier over a fixed, ordered label set. classify() returns a
/// probability vector aligned with label_set().
class LabelClassifier {
public:
    virtual ~LabelClassifier() = default;

    virtual std::string classifier_id() const = 0;
    virtual std::vector<std::string> label_set() const = 0;
    virtual std::vector<double> classify(const Image& image) const = 0;
};

inline constexpr double kDistributionTolerance = 1e-5;

struct Classification {
    std::string label;
    double confidence = 0.0;
    std::map<std::string, double> distribution;
};

/// Argmax with ties going to the earlier label in label_set order.
inline Classification classify(const Image& image, const LabelClassifier& clf) {
    const auto id = clf.classifier_id();
    if (image.empty()) throw EvaluationError(id, "image is empty");
    const auto labels = clf.label_set();
    if (labels.empty()) throw EvaluationError(id, "label set is empty");
    std::vector<double> probs;
    try {
        probs = clf.classify(image);
    } catch (const EvaluationError&) {
        throw;
    } catch (const std::exception& e) {
        throw EvaluationError(id, std::string("classifier failed: ") + e.what());
    }
    if (probs.size() != labels.size()) throw EvaluationError(id, "distribution length does not match the label set");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw EvaluationError(id, "probability outside [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance) throw EvaluationError(id, "probabilities do not sum to 1");

    Classification c;
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    c.label = labels[best];
    c.confidence = probs[best];
    for (std::size_t i = 0; i < labels.size(); ++i) c.distribution[labels[i]] = probs[i];
    return c;
}

/// Builds a report straight from prediction labels; used by score_design
/// and to recompute stored scores.
inline EvaluationReport make_report(const DesignRequest& request, const Classification& room, const Classification& style) {
    EvaluationReport r;
    r.predicted_room_type = room.label;
    r.room_type_confidence = room.confidence;
    r.room_type_distribution = room.distribution;
    r.predicted_style = style.label;
    r.style_confidence = style.confidence;
    r.style_distribution = style.distribution;
    r.room_type_match = labels_equal(room.label, request.room_type);
    r.style_match = labels_equal(style.label, request.style);
    r.final_score = compute_final_score(r.room_type_match, r.style_match);
    return r;
}

/// Re-derives the match booleans and score of a stored report.
inline EvaluationReport recompute_report(const DesignRequest& request, const EvaluationReport& stored) {
    EvaluationReport r = stored;
    r.room_type_match = labels_equal(stored.predicted_room_type, request.room_type);
    r.style_match = labels_equal(stored.predicted_style, request.style);
    r.final_score = compute_final_score(r.room_type_match, r.style_match);
    return r;
}

inline void check_coverage(const LabelClassifier& clf, const std::vector<std::string>& required) {
    const auto labels = clf.label_set();
    for (const auto& l : required) {
        if (!LabelConfig::contains(labels, l)) {
            throw ConfigurationError("classifier " + clf.classifier_id() + " cannot predict configured label '" + l + "'");
        }
    }
}

inline EvaluationReport score_design(const DesignRequest& request, const GeneratedDesign& design, const LabelClassifier& room_clf,
                                     const LabelClassifier& style_clf, const LabelConfig& labels = {}) {
    check_coverage(room_clf, labels.room_types);
    check_coverage(style_clf, labels.styles);
    const auto room = classify(design.image, room_clf);
    const auto style = classify(design.image, style_clf);
    return make_report(request, room, style);
}

/// Returns a fixed distribution regardless of the image.
class FixedClassifier final : public LabelClassifier {
public:
    FixedClassifier(std::string id, std::vector<std::string> labels, std::vector<double> distribution)
        : id_(std::move(id)), labels_(std::move(labels)), dist_(std::move(distribution)) {}

    /// One-hot on `label` (which must be in `labels`).
    static FixedClassifier one_hot(std::string id, std::vector<std::string> labels, const std::string& label) {
        std::vector<double> d(labels.size(), 0.0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels_equal(labels[i], label)) d[i] = 1.0;
        }
        return FixedClassifier(std::move(id), std::move(labels), std::move(d));
    }

    std::string classifier_id() const override { return id_; }
    std::vector<std::string> label_set() const override { return labels_; }
    std::vector<double> classify(const Image&) const override { return dist_; }

private:
    std::string id_;
    std::vector<std::string> labels_;
    std::vector<double> dist_;
};

/// Reads the palette slot stamped by StubBackend and maps it to a label
/// through `key` (slot i -> key[i % key.size()]). Puts `confidence` on the
/// keyed label and spreads the rest uniformly. Unstamped images get the
/// uniform distribution.
class PaletteKeyedClassifier final : public LabelClassifier {
public:
    PaletteKeyedClassifier(std::string id, std::vector<std::string> labels, std::vector<std::string> key,
                           double confidence = 0.9)
        : id_(std::move(id)), labels_(std::move(labels)), key_(std::move(key)), confidence_(confidence) {
        if (labels_.empty()) throw ConfigurationError(id_ + ": empty label set");
        if (key_.empty()) key_ = labels_;
        for (const auto& k : key_) {
            if (!LabelConfig::contains(labels_, k)) throw ConfigurationError(id_ + ": key label '" + k + "' not in label set");
        }
    }

    std::string classifier_id() const override { return id_; }
    std::vector<std::string> label_set() const override { return labels_; }

    std::string keyed_label(std::size_t slot) const { return key_[slot % key_.size()]; }

    std::vector<double> classify(const Image& image) const override {
        const std::size_t n = labels_.size();
        std::vector<double> d(n, 1.0 / static_cast<double>(n));
        const auto slot = decode_palette_stamp(image);
        if (!slot || n == 1) return d;
        const std::string target = keyed_label(*slot);
        const double rest = (1.0 - confidence_) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) d[i] = labels_equal(labels_[i], target) ? confidence_ : rest;
        return d;
    }

private:
    std::string id_;
    std::vector<std::string> labels_;
    std::vector<std::string> key_;
    double confidence_;
};

}  // namespace decomind
