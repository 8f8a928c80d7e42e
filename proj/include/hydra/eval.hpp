#pragma once

#include <map>
#include <string>
#include <vector>

namespace hydra {

struct FoldSpec {
    int fold_idx = 0;
    int test_repetition = 0;
    std::vector<int> train_repetitions;
};

// Leave-one-repetition-out: fold k holds out repetition k. Needs repetitions 0..folds-1 for every class.
std::vector<FoldSpec> kfold_split(const std::vector<int>& labels, const std::vector<int>& repetitions, int folds = 5);

struct FoldIndices {
    std::vector<size_t> train, test;
};
FoldIndices fold_indices(const std::vector<int>& repetitions, const FoldSpec& f);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

struct MeanStd {
    double mean = 0, std = 0;  // sample (n-1) standard deviation; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& v);

// acc[model][fold][subject]
class ResultTable {
public:
    explicit ResultTable(std::vector<std::string> models, int folds = 5);
    void set(const std::string& model, int fold, int subject, double acc);
    const std::vector<std::string>& models() const { return models_; }
    int folds() const { return folds_; }
    int subjects() const;
    MeanStd fold_stats(const std::string& model, int fold) const;
    MeanStd average(const std::string& model) const;       // mean of fold means; std = mean of fold stds
    double subject_accuracy(const std::string& model, int subject) const;  // mean over folds

    std::string csv() const;           // model,fold,mean,std (+ one "average" row per model)
    std::string text_table() const;    // aligned, labeled synthetic
    std::string boxplot_csv() const;   // model,subject,accuracy

private:
    std::vector<std::string> models_;
    int folds_;
    std::map<std::string, std::vector<std::map<int, double>>> acc_;
};

}  // namespace hydra
