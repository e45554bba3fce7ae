#include "earshot/standin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "earshot/error.hpp"
#include "earshot/text.hpp"
#include "earshot/transcript.hpp"

namespace earshot {

namespace {

struct Fact {
  const char* whisper;
  const char* memory;    // "{n}" is replaced by the persona's name
  const char* question;
  const char* answer;
};

constexpr std::array<Fact, 24> kFacts = {{
    {"Cocos Islands", "{n} went diving at the Cocos Islands marine reserve in May.",
     "Which reserve was it that you visited for the diving trip?",
     "It was the Cocos Islands reserve, and the reefs there were full of life."},
    {"May 12", "{n} set off on the reef trip on May 12 with a neighbor.", "What day did you set off on that reef trip?",
     "We left on May 12, right after the rainy week ended."},
    {"Liu Lin", "{n} planned the trip together with a neighbor named Liu Lin.",
     "And which neighbor planned the trip with you?", "My neighbor Liu Lin came along, she loves the ocean as much as I do."},
    {"Copernicus", "{n}'s mother often talked about Copernicus and the heliocentric model.",
     "Whose model was it that your mother always talked about?",
     "It was Copernicus, she read that book on celestial motion twice."},
    {"Lisbon", "{n} spent a week in Lisbon last autumn for a water conference.",
     "Where was that water conference held again?", "It was in Lisbon, the venue looked right over the river."},
    {"Riverside Cafe", "{n} meets a study group every Thursday at the Riverside Cafe.",
     "What's the name of the place where your group meets?",
     "We meet at the Riverside Cafe, they keep a big table for us."},
    {"Doctor Alvarez", "{n}'s physiotherapist is Doctor Alvarez at the city clinic.",
     "Who is the physiotherapist at the clinic that helped your knee?",
     "Doctor Alvarez helped me, she gave me a whole stretching routine."},
    {"March third", "{n}'s pottery exhibition opens on March third at the community hall.",
     "When does your pottery exhibition actually open?", "It opens on March third, so I still have a few weeks."},
    {"Blue Ridge", "{n} hiked the Blue Ridge trail with a cousin last October.",
     "Which trail did you end up hiking with your cousin?", "We did the Blue Ridge trail, it took us almost four days."},
    {"sourdough starter", "{n} keeps a sourdough starter that a grandmother gave as a gift.",
     "What was that thing your grandmother gave you for baking?",
     "She gave me a sourdough starter, and I still feed it every morning."},
    {"Maple Street", "{n} recently moved into a small apartment on Maple Street.",
     "Where is the small apartment you moved into?", "We are on Maple Street now, close to the old library."},
    {"Kyoto", "{n} studied tea ceremony for two weeks in Kyoto.", "Where did you study tea ceremony?",
     "I took it in Kyoto, at a tiny school near the river."},
    {"violin recital", "{n}'s daughter has a violin recital next Saturday evening.",
     "What's happening with your daughter next weekend?",
     "She has her violin recital on Saturday, and she is practicing every night."},
    {"Professor Okafor", "{n} wrote a thesis under Professor Okafor on river restoration.",
     "Who supervised your thesis on river restoration?", "Professor Okafor did, he pushed me to do fieldwork every summer."},
    {"half marathon", "{n} finished a first half marathon in under two hours last month.",
     "What race did you run last month?", "It was a half marathon, my first one, and I finished under two hours."},
    {"Harbor Bridge", "{n} photographed the Harbor Bridge at sunrise for a city contest.",
     "What did you photograph at sunrise for the contest?", "It was the Harbor Bridge at sunrise, shot from the ferry."},
    {"Luna", "{n} adopted a rescue dog named Luna from the shelter.", "What's the name of the rescue dog you adopted?",
     "Her name is Luna, she came from the shelter last winter."},
    {"Oslo", "{n}'s brother lives in Oslo and works on ferry design.", "Where does your brother live now, the one who works on ferry design?",
     "He lives in Oslo these days, designing electric ferries."},
    {"chess club", "{n} runs a Tuesday night chess club for students.", "What's the thing you run on Tuesday nights for students?",
     "It's the chess club for students, we get about twenty kids."},
    {"Grand Canyon", "{n} camped at the Grand Canyon south rim with college friends.",
     "Where did you go camping with your college friends?",
     "We camped at the Grand Canyon, right on the south rim."},
    {"solar panels", "{n} installed solar panels on the family home last summer.",
     "What did you install on the family home?", "We put solar panels on the roof, and the bills dropped a lot."},
    {"Ms. Chen", "{n}'s mentor at work is a senior engineer called Ms. Chen.",
     "Who is your mentor at work, the senior engineer?", "That would be Ms. Chen, she has been there for fifteen years."},
    {"night market", "{n} sold handmade candles at the Friday night market.",
     "Where did you sell those handmade candles?", "At the Friday night market, I had a small stall near the fountain."},
    {"jazz festival", "{n} volunteered at the summer jazz festival downtown.",
     "What did you volunteer at downtown this summer?",
     "I volunteered at the jazz festival downtown, mostly at the gate."},
}};

constexpr std::array<const char*, 30> kOtherFiller = {
    "That sounds like a lot of work but it must have been worth it.",
    "I have always wanted to try something like that myself.",
    "We had a similar experience last year, although it was much shorter.",
    "I think the audience would love to hear a bit more about that part.",
    "Honestly I did not expect it to be so popular around here.",
    "It reminds me of a project my team worked on a while ago.",
    "The timing of all of this seems really important to me.",
    "I read an article about that just the other week.",
    "That is a fair point and I had not thought about it that way.",
    "My sister keeps telling me to get more involved in things like that.",
    "It must take a lot of patience to keep going with it.",
    "I remember when people barely talked about this topic at all.",
    "The pictures you shared earlier were really impressive.",
    "We should organize something similar for the whole group.",
    "I can see why that would change how you think about your work.",
    "It is funny how small decisions end up shaping so much.",
    "I was a bit skeptical at first but you are convincing me.",
    "Most people I know would not have the time for that.",
    "It sounds like you had good people around you the whole time.",
    "I would be nervous doing that in front of so many people.",
    "That is exactly the kind of example I was hoping for.",
    "I wonder how long it will take before everyone catches on.",
    "There is so much we still do not understand about it.",
    "You make it sound a lot easier than it probably was.",
    "We tried that approach once and it did not go very well.",
    "I like that you keep coming back to the practical side.",
    "I think a lot of us could learn something from that.",
    "It is good to hear a story that ends on a positive note.",
    "The details you mentioned really help me picture it.",
    "That changes my view of the whole thing a little bit.",
};

constexpr std::array<const char*, 30> kUserFiller = {
    "I think the most important thing is to keep learning as you go.",
    "It really changed the way I approach my work every single day.",
    "We spent a lot of time planning before we committed to anything.",
    "There were a few difficult moments but the good parts outweighed them.",
    "I try to share what I learn with the people around me.",
    "Looking back I would probably do a few things differently.",
    "It took longer than expected but that was part of the fun.",
    "The people involved made the whole experience much better.",
    "I was surprised by how much I enjoyed the quiet moments.",
    "Every time I go back I notice something new.",
    "I have been trying to make more time for things like this.",
    "It is one of those experiences that stays with you for years.",
    "We kept notes the whole time so we would not forget the details.",
    "I think anyone could do it with a bit of preparation.",
    "The hardest part was simply getting started.",
    "It made me appreciate how much work goes into these things.",
    "I would recommend it to anyone who has the chance.",
    "There is a real community around it which I did not expect.",
    "My family was a little worried at first but they came around.",
    "It connects closely with what I do at work.",
    "I am already thinking about what to try next.",
    "Some days it felt like we were not making any progress.",
    "The best advice I got was to slow down and pay attention.",
    "We met some wonderful people along the way.",
    "I keep a small journal about it now.",
    "It was not perfect but it was exactly what I needed.",
    "I like to think it made me a bit more patient.",
    "Those small routines ended up mattering the most.",
    "The whole thing started almost by accident.",
    "I still talk about it with friends all the time.",
};

constexpr std::array<const char*, 12> kQuickQuestions = {
    "Was it very crowded?",          "Did you enjoy it?",          "Would you do it again?",
    "Was it expensive?",             "How did you get started?",   "Was it hard to organize?",
    "Did your family join you?",     "Was the weather good?",      "Do you do that often?",
    "Did it take long?",             "Were you nervous?",          "Is that common around here?",
};

constexpr std::array<const char*, 16> kFirstNames = {"Mira",  "Jonah", "Aiko",  "Tomas", "Priya", "Elena",
                                                     "Kofi",  "Sven",  "Lucia", "Ravi",  "Hana",  "Owen",
                                                     "Nadia", "Felix", "Ines",  "Dario"};
constexpr std::array<const char*, 12> kJobs = {"environmental engineer", "high school teacher", "nurse",
                                               "software developer",     "architect",           "chef",
                                               "photographer",           "accountant",          "graphic designer",
                                               "civil engineer",         "pharmacist",          "journalist"};

using Rng = std::mt19937_64;

template <typename T, std::size_t N>
const T& pick(const std::array<T, N>& a, Rng& rng) {
  return a[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Millis round100(double seconds) { return Millis(std::llround(seconds * 10.0) * 100); }

Millis speak_time(std::size_t words) { return round100(static_cast<double>(words) / 2.9); }

struct Draft {
  SpeakerId speaker = SpeakerId::user();
  std::string text;
  bool question_episode = false;  // other speaker asking for a fact
  bool quick_question = false;
  std::size_t fact = 0;
};

std::string sentences(const std::string& first, const char* second) { return first + " " + second; }

Utterance make_turn(SpeakerId who, const std::string& text, Millis start, Rng& rng, bool allow_hesitation) {
  Utterance u;
  u.speaker = who;
  u.words = text::split_words(text);
  u.start = start;
  Millis dur = speak_time(u.words.size());
  if (allow_hesitation && u.words.size() > 8 && std::bernoulli_distribution(0.3)(rng)) {
    Millis h = round100(uniform(rng, 0.1, 0.3));
    if (h > Millis(0)) {
      u.hesitations.push_back({u.words.size() / 2, h});
      dur += h;
    }
  }
  u.end = start + dur;
  return u;
}

}  // namespace

StandinSample make_standin(std::uint64_t seed, std::string id, const StandinOptions& opts) {
  if (opts.min_turns < 4 || opts.max_turns < opts.min_turns || opts.min_whispers < 1 ||
      opts.max_whispers < opts.min_whispers || opts.max_other_speakers < 1) {
    throw Error(ErrorCode::InvalidArgument, "inconsistent stand-in options");
  }
  Rng rng(seed);
  StandinSample s;

  // Memory: persona plus two events carrying the facts the dialogue asks about.
  std::string name = pick(kFirstNames, rng);
  int age = std::uniform_int_distribution<int>(22, 64)(rng);
  std::string job = pick(kJobs, rng);
  const std::size_t n_turns = std::uniform_int_distribution<std::size_t>(opts.min_turns, opts.max_turns)(rng);
  const std::size_t max_fit = (n_turns - 2) / 4;
  const std::size_t n_whispers =
      std::clamp(std::uniform_int_distribution<std::size_t>(opts.min_whispers, opts.max_whispers)(rng),
                 std::size_t{1}, std::max<std::size_t>(1, max_fit));
  std::vector<std::size_t> fact_ids(kFacts.size());
  for (std::size_t i = 0; i < fact_ids.size(); ++i) fact_ids[i] = i;
  std::shuffle(fact_ids.begin(), fact_ids.end(), rng);
  fact_ids.resize(n_whispers);

  s.memory.memory_id = "mem_" + id;
  s.memory.source = MemorySource::Keywords;
  s.memory.profile_text = name + " is a " + std::to_string(age) + "-year-old " + job +
                          ". " + name + " enjoys meeting new people and talking about recent experiences.";
  std::string ev1, ev2;
  for (std::size_t i = 0; i < fact_ids.size(); ++i) {
    auto line = text::replace_all(kFacts[fact_ids[i]].memory, "{n}", name);
    std::string& ev = i % 2 == 0 ? ev1 : ev2;
    if (!ev.empty()) ev += ' ';
    ev += line;
  }
  if (ev2.empty()) ev2 = name + " has been busy at work as a " + job + " over the last month.";
  s.memory.events = {EventRecord::make("event_1", ev1), EventRecord::make("event_2", ev2)};

  // Turn plan: alternate between the user and others; episodes sit on other
  // speakers' turns at least four turns apart.
  const int n_others = std::uniform_int_distribution<int>(1, static_cast<int>(opts.max_other_speakers))(rng);
  std::vector<Draft> plan;
  for (std::size_t i = 0; i < n_turns; ++i) {
    Draft d;
    d.speaker = i % 2 == 0 ? SpeakerId::user() : SpeakerId::other(std::uniform_int_distribution<int>(1, n_others)(rng));
    plan.push_back(d);
  }
  std::vector<std::size_t> slots;
  for (std::size_t i = 1; i + 1 < n_turns; i += 2) slots.push_back(i);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<std::size_t> chosen;
  for (auto sl : slots) {
    if (chosen.size() == n_whispers) break;
    bool spaced = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return sl + 4 <= c || c + 4 <= sl; });
    if (spaced) chosen.push_back(sl);
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    plan[chosen[k]].question_episode = true;
    plan[chosen[k]].fact = fact_ids[k];
  }
  for (std::size_t i = 1; i + 1 < n_turns; i += 2) {
    if (!plan[i].question_episode && std::bernoulli_distribution(0.3)(rng)) plan[i].quick_question = true;
  }

  Dialogue& d = s.dialogue;
  d.id = id;
  d.memory_id = s.memory.memory_id;
  d.source = DialogueSource::Synthetic;
  Millis cursor{0};
  Millis last_start{0};
  std::optional<std::size_t> pending_fact;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Draft& p = plan[i];
    std::string txt;
    if (p.speaker.is_user()) {
      txt = pending_fact ? sentences(kFacts[*pending_fact].answer, pick(kUserFiller, rng))
                         : sentences(pick(kUserFiller, rng), pick(kUserFiller, rng));
      pending_fact.reset();
    } else if (p.question_episode) {
      txt = sentences(pick(kOtherFiller, rng), kFacts[p.fact].question);
    } else if (p.quick_question) {
      txt = sentences(pick(kOtherFiller, rng), pick(kQuickQuestions, rng));
    } else {
      txt = sentences(pick(kOtherFiller, rng), pick(kOtherFiller, rng));
    }

    Millis start{0};
    if (i > 0) {
      const Draft& prev = plan[i - 1];
      Millis gap = prev.question_episode ? round100(uniform(rng, 2.5, 3.5))
                   : prev.quick_question ? round100(uniform(rng, 0.1, 0.8))
                                         : round100(uniform(rng, -1.0, 1.0));
      start = std::max(cursor + gap, last_start);
    }
    const Millis prev_end = cursor;
    auto u = make_turn(p.speaker, txt, start, rng, p.speaker.is_user());
    if (i > 0 && plan[i - 1].question_episode) {
      // Whisper inside the silence, before the user speaks.
      Utterance w;
      w.speaker = SpeakerId::assistant();
      w.words = text::split_words(kFacts[plan[i - 1].fact].whisper);
      w.start = prev_end + round100(uniform(rng, 0.8, 1.2));
      w.end = w.start + speak_time(w.words.size());
      d.turns.push_back(std::move(w));
    }
    last_start = u.start;
    cursor = u.end;
    if (p.question_episode) pending_fact = p.fact;
    d.turns.push_back(std::move(u));
  }
  return s;
}

std::vector<StandinSample> standin_corpus(std::size_t n, std::uint64_t seed, const StandinOptions& opts) {
  std::vector<StandinSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "standin_%04zu", i);
    out.push_back(make_standin(seed + i, id, opts));
  }
  return out;
}

ScriptedChatClient::Handler standin_generation_handler(std::uint64_t seed) {
  auto counter = std::make_shared<std::uint64_t>(0);
  return [seed, counter](const ChatRequest& req) -> std::string {
    auto sample = make_standin(seed + (*counter)++, "fixture");
    bool dialogue_request = std::any_of(req.messages.begin(), req.messages.end(), [](const ChatMessage& m) {
      return m.content.find(kDialogueStart) != std::string::npos;
    });
    if (!dialogue_request) {
      return "<input_analysis>stand-in</input_analysis>\n<user_memory>\n" + sample.memory.profile_text +
             "\n</user_memory>\n<event_1>\n" + sample.memory.events[0].text + "\n</event_1>\n<event_2>\n" +
             sample.memory.events[1].text + "\n</event_2>\n";
    }
    return "###\n---\n" + render_transcript(sample.dialogue, true) + "---\n###\n";
  };
}

}  // namespace earshot
