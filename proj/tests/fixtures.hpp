#pragma once

#include <string>

#include "dce/kb.hpp"
#include "dce/rules.hpp"

namespace dce::testing {

inline const std::string kClassifierRules =
    "predict(X,Y) :- hasFeature(X,F), indicates(F,Y).\n";

inline const std::string kErRule = "predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).\n";

inline const std::string kCoTrainRules =
    "predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).\n"
    "predict(X,Y) :- predict1(X,Y).\n"
    "predict(X,Y) :- predict2(X,Y).\n"
    "predict1(X,Y) :- hasFeature1(X,F), indicates1(F,Y).\n"
    "predict2(X,Y) :- hasFeature2(X,F), indicates2(F,Y).\n";

inline const std::string kNberRule =
    "neighborPredictionsHaveEntropy(X1,H) :- near(X1,X2), predict(X2,Y2), entropy(Y2,H).\n";

inline const std::string kLperRules =
    "nearbyPredictionsHaveEntropy(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
    "sim(X1,X3) :- near(X1,X3).\n"
    "sim(X1,X3) :- near(X1,X2), sim(X2,X3).\n";

inline const std::string kColperRules =
    "nearbyPredictionsHaveEntropy(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
    "sim(X1,X3) :- near(X1,X3).\n"
    "sim(X1,X3) :- near(X1,Z), near(Z,X2), sim(X2,X3).\n";

inline const std::string kTypedCoTrainRules =
    "predictionHasEntropy(X,H) :- predict(X,T), entropy(T,H).\n"
    "predict(X,T) :- predictT(X,T).\n"
    "predict(X,T) :- predictR(X,R), hasType(R,T).\n";

inline const std::string kPairNberRule =
    "pairPredictionsHaveEntropy(P,H) :- hasExample(P,X1), predict(X1,Y), entropy(Y,H).\n";

inline const std::string kSetColperRules =
    "setPredictionsHaveEntropy(P,H) :- hasExampleSet(P,X2), predict(X2,Y), entropy(Y,H).\n"
    "hasExampleSet(P,X2) :- hasExample(P,X2).\n"
    "hasExampleSet(P,X2) :- hasExample(P,X1), inPair(X1,P2), hasExampleSet(P2,X2).\n";

/// Every rule shown for the classifier, the text-categorization constraints
/// and the relation-extraction constraints.
inline std::string rule_corpus() {
  return kClassifierRules + kErRule + kCoTrainRules + kNberRule + kLperRules + kColperRules +
         kTypedCoTrainRules + kPairNberRule + kSetColperRules;
}

/// x1 has features pars (0.6) and lstm (0.4); pars indicates accept (0.2),
/// lstm indicates reject (0.3).
inline KnowledgeBase toy_kb(bool freeze = true) {
  KnowledgeBase kb;
  for (const char* name : {"x1", "pars", "lstm", "accept", "reject"}) kb.intern(name);
  kb.add_fact("hasFeature", "x1", "pars", 0.6);
  kb.add_fact("hasFeature", "x1", "lstm", 0.4);
  kb.add_fact("indicates", "pars", "accept", 0.2);
  kb.add_fact("indicates", "lstm", "reject", 0.3);
  if (freeze) kb.freeze();
  return kb;
}

}  // namespace dce::testing
