#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fribble/grammar.hpp"
#include "fribble/haptics.hpp"
#include "fribble/inference.hpp"
#include "fribble/object_model.hpp"
#include "fribble/view_bank.hpp"
#include "fribble/vision.hpp"

namespace fribble {

inline constexpr int kCategoryCount = 4;
inline constexpr int kExemplarsPerCategory = 10;
inline constexpr int kTrainPerCategory = 6;
inline constexpr double kDatasetScale = 0.3;

struct FribbleObject {
  int category = 0;  // 1-based
  int exemplar = 0;  // 0-based within the category
  bool train = false;
  Derivation derivation;
  std::vector<std::string> parts;  // terminal yield
  VoxelObject object;
  GraspVector grasp;                 // canonical view
  std::vector<HogDescriptor> views;  // one per grid viewpoint

  // Descriptor of the canonical (unrotated) view.
  const HogDescriptor& canonical_view() const;
};

struct FribbleDataset {
  std::uint64_t seed = 0;
  double scale = kDatasetScale;
  std::array<std::vector<std::string>, kCategoryCount> prototypes;  // part lists
  std::vector<FribbleObject> objects;  // category-major, exemplar-minor

  std::vector<const FribbleObject*> split(bool train) const;
  std::vector<const FribbleObject*> category(int c, bool train) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index of the identity viewpoint in viewpoint_grid().
int canonical_view_index();

// The minimal derivation F -> N trunk, N -> M M M M, M -> slot, slot -> part
// for one part per preterminal slot, given in slot order.
Derivation slot_derivation(const Grammar& g, const PartLibrary& lib,
                           const std::vector<std::string>& slot_parts);

// Slot preterminals in grammar order.
std::vector<SymbolId> slots(const Grammar& g);

// Four categories, one per part family; each prototype takes one family
// part per slot, and each of its 10 exemplars swaps 1-2 slots for other
// parts of the same family and slot. Exemplars 0-5 train, 6-9 test.
FribbleDataset synthesize_dataset(const Grammar& g, const PartLibrary& lib, const HandModel& hand,
                                  std::uint64_t seed, double scale = kDatasetScale);

// dataset/<seed>/cat<k>/ex<j>.{voxels,grasp,json} plus dataset.json.
void export_dataset(const FribbleDataset& d, const std::filesystem::path& root);
FribbleDataset load_dataset(const std::filesystem::path& dir, const Grammar& g,
                            const PartLibrary& lib);

SensoryObservation observe(const FribbleObject& o, Modality m);

struct TrainConfig {
  Modality modality = Modality::kBoth;
  ChainConfig chain;
  double sharpness = 1.0;
  PrototypeRule rule = PrototypeRule::kMaxPosterior;
};

struct ChainReport {
  int exemplar = 0;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  double max_cache_drift = 0.0;
  std::vector<TraceRecord> trace;
};

struct CategoryModel {
  int category = 0;
  PosteriorSummary summary;  // pooled over the category's chains
  std::vector<ChainReport> chains;
  std::vector<std::string> prototype_parts;
};

// One chain per training exemplar; chain j of category c is seeded with
// derive_seed(config.chain.seed, 100 c + j).
CategoryModel train_category(const FribbleDataset& d, int category, const TrainConfig& config,
                             const Grammar& g, const ViewBank& bank);

// Trains every category, running up to `jobs` categories at once. Output
// does not depend on `jobs`.
std::vector<CategoryModel> train_all(const FribbleDataset& d, const TrainConfig& config,
                                     const Grammar& g, const ViewBank& bank, int jobs = 1);

// Per-category reference views of a prototype.
struct PrototypeViews {
  std::vector<GraspVector> grasps;
  std::vector<HogDescriptor> descriptors;
};
PrototypeViews prototype_views(const std::vector<std::string>& parts, const ViewBank& bank);

// argmax over categories (1-based) of the channel likelihood; ties go to the
// lowest id.
int categorize_haptic(const GraspVector& test, const std::vector<PrototypeViews>& prototypes);
int categorize_haptic(const GraspVector& test, const std::vector<VoxelObject>& prototypes,
                      const HandModel& hand);
int categorize_vision(const HogDescriptor& test, const std::vector<PrototypeViews>& prototypes);

struct Perturbation {
  int view = 0;  // grid index
  double heading_offset = 0.0;
  double pitch_offset = 0.0;
  double scale_factor = 1.0;

  Viewpoint viewpoint() const;
};

inline constexpr double kMaxAngleOffset = 20.0;
inline constexpr double kMinScaleFactor = 0.7;
inline constexpr double kMaxScaleFactor = 1.3;

Perturbation draw_perturbation(Rng& rng);
// Descriptor of the test object's parts realized at scale x factor and
// seen from the perturbed viewpoint.
HogDescriptor perturbed_view(const std::vector<std::string>& parts, const PartLibrary& lib,
                             double scale, const Perturbation& p);

struct ConfusionMatrix {
  std::array<std::array<int, kCategoryCount>, kCategoryCount> counts{};

  void add(int truth, int predicted);  // 1-based
  int total() const;
  int correct() const;
  double accuracy() const;  // 0 when empty
  std::string to_csv() const;
};

struct Prediction {
  int category = 0;
  int exemplar = 0;
  int predicted = 0;
  std::optional<Perturbation> perturbation;
};

struct CategorizationResults {
  std::vector<Prediction> haptic;
  std::vector<Prediction> vision;
  ConfusionMatrix haptic_matrix;
  ConfusionMatrix vision_matrix;
};

// Test-split sweep of both classifiers. Vision perturbations are drawn from
// derive_seed(seed, 7).
CategorizationResults categorize_all(const FribbleDataset& d,
                                     const std::vector<std::vector<std::string>>& prototypes,
                                     const PartLibrary& lib, const ViewBank& bank,
                                     std::uint64_t seed);

nlohmann::json results_to_json(const CategorizationResults& r);
CategorizationResults results_from_json(const nlohmann::json& j);

// confusion_haptic.csv, confusion_vision.csv, accuracy.json and, for each
// model, prototypes/cat<k>.pgm.
void emit_report(const CategorizationResults& results,
                 const std::vector<std::vector<std::string>>& prototypes, const PartLibrary& lib,
                 double scale, const std::filesystem::path& dir);

}  // namespace fribble
