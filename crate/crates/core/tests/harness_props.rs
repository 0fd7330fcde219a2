use govtrust_core::game::Action;
use govtrust_core::harness::backend::BackendRegistry;
use govtrust_core::harness::prompt::{
    count_history_lines, PromptTemplate, TemplateError, DEFAULT_TEMPLATE,
};
use govtrust_core::harness::transcript::{read_jsonl, to_jsonl_string, GameTranscript};
use govtrust_core::harness::{
    parse_action, play_game_ordered, render_prompt, AgentSpec, BackendConfig, GameSpec, ParseError,
    Personality,
};
use govtrust_core::{payoff, play_game, GameParams, GameRun, PayoffTriple, Role, TrustMode};
use proptest::prelude::*;

fn registry(config: BackendConfig) -> BackendRegistry {
    BackendRegistry::from_configs(&[config]).unwrap()
}

fn play(spec: &GameSpec, reg: &BackendRegistry, seed: u64, replication: u32) -> GameTranscript {
    let run = GameRun::new(format!("g{seed}"), seed, replication);
    play_game(spec, &PromptTemplate::default_template(), reg, &run).unwrap()
}

fn spec_with(mode: TrustMode, rounds: u32, traits: &[Personality]) -> GameSpec {
    let mut spec = GameSpec::new(mode, GameParams::default(), rounds, "default");
    for &t in traits {
        spec = spec.with_personality(t);
    }
    spec
}

fn all_prompts(t: &GameTranscript) -> impl Iterator<Item = (u32, Role, &str)> {
    t.rounds.iter().flat_map(|r| {
        r.turns
            .iter()
            .map(move |turn| (r.round, turn.role, turn.prompt.as_str()))
    })
}

#[test]
fn fixed_trust_one_shot_unconditional() {
    let reg = registry(BackendConfig::fixed("TCC"));
    let t = play(&spec_with(TrustMode::Unconditional, 1, &[]), &reg, 0, 0);
    assert!(t.valid);
    assert_eq!(t.rounds.len(), 1);
    assert_eq!(t.rounds[0].payoffs, PayoffTriple::new(4.0, 3.5, 3.5));
}

#[test]
fn fixed_defection_ten_rounds_pays_nothing() {
    let reg = registry(BackendConfig::fixed("NDD"));
    let t = play(&spec_with(TrustMode::Conditional, 10, &[]), &reg, 0, 0);
    assert!(t.valid);
    assert_eq!(t.rounds.len(), 10);
    assert_eq!(t.cumulative_payoffs(), PayoffTriple::ZERO);
}

#[test]
fn seed_seven_is_byte_identical() {
    let reg = registry(BackendConfig::scripted_random(7));
    let spec = spec_with(TrustMode::Conditional, 10, &[Personality::Strict]);
    let a = to_jsonl_string(&[play(&spec, &reg, 7, 0)]);
    let b = to_jsonl_string(&[play(&spec, &reg, 7, 0)]);
    assert_eq!(a, b);
    let other = to_jsonl_string(&[play(&spec, &reg, 8, 0)]);
    assert_ne!(a, other);
}

#[test]
fn one_shot_has_no_history() {
    let reg = registry(BackendConfig::fixed("CTCC"));
    let t = play(&spec_with(TrustMode::Conditional, 1, &[]), &reg, 0, 0);
    for (_, _, prompt) in all_prompts(&t) {
        assert_eq!(count_history_lines(prompt), 0);
        assert!(prompt.contains("(none)"));
    }
}

#[test]
fn personality_text_reaches_its_agent_only() {
    let reg = registry(BackendConfig::fixed("CTCC"));
    let t = play(
        &spec_with(TrustMode::Conditional, 1, &[Personality::Aggressive]),
        &reg,
        0,
        0,
    );
    for (_, role, prompt) in all_prompts(&t) {
        let has = prompt.contains("you develop quickly to stay ahead, accepting some risks");
        assert_eq!(has, role == Role::Developer, "{role}");
    }
    let t = play(
        &spec_with(TrustMode::Conditional, 1, &[Personality::Strict]),
        &reg,
        0,
        0,
    );
    for (_, role, prompt) in all_prompts(&t) {
        assert_eq!(
            prompt.contains("you require verification before deployment"),
            role == Role::Regulator
        );
    }
}

#[test]
fn conditional_user_is_told_about_reputation() {
    let reg = registry(BackendConfig::fixed("CTCC"));
    let t = play(&spec_with(TrustMode::Conditional, 1, &[]), &reg, 0, 0);
    let user = &t.rounds[0].turns[0];
    assert_eq!(user.role, Role::User);
    assert!(user
        .prompt
        .contains("reputation is publicly known before you choose"));
    let t = play(
        &spec_with(TrustMode::Unconditional, 1, &[]),
        &registry(BackendConfig::fixed("TCC")),
        0,
        0,
    );
    assert!(!t.rounds[0].turns[0].prompt.contains("reputation"));
}

#[test]
fn prompts_verbalise_every_payoff_row() {
    let spec = spec_with(TrustMode::Conditional, 1, &[]);
    let agent = spec.agent(Role::User).unwrap();
    let prompt = render_prompt(DEFAULT_TEMPLATE, agent, &spec, &[]).unwrap();
    assert!(prompt.contains(
        "If the user plays CT, the developer plays D and the regulator plays C: \
         the user gets -0.4, the developer gets 2.5, the regulator gets 5."
    ));
    let rows = prompt
        .lines()
        .filter(|l| l.starts_with("- If the user plays"))
        .count();
    assert_eq!(rows, 8);
    assert!(!prompt.contains("{{") && !prompt.contains("}}"));
}

#[test]
fn template_errors_are_reported() {
    let spec = spec_with(TrustMode::Conditional, 1, &[]);
    let agent = spec.agent(Role::User).unwrap();
    let with_extra = format!("{DEFAULT_TEMPLATE}\n{{{{mood}}}}");
    assert_eq!(
        render_prompt(&with_extra, agent, &spec, &[]).unwrap_err(),
        TemplateError::UnknownPlaceholder("mood".into())
    );
    let without_history = DEFAULT_TEMPLATE.replace("{{history}}", "");
    assert_eq!(
        render_prompt(&without_history, agent, &spec, &[]).unwrap_err(),
        TemplateError::MissingRequired("history")
    );
}

#[test]
fn parse_examples() {
    assert_eq!(
        parse_action("I choose: C", Role::Developer),
        Ok(Action::Comply)
    );
    assert_eq!(
        parse_action("As a cautious user, N.", Role::User),
        Ok(Action::NoTrust)
    );
    assert_eq!(
        parse_action("I would either C or D depending...", Role::Developer),
        Err(ParseError::Ambiguous(Role::Developer))
    );
    assert_eq!(
        parse_action("Hmm.", Role::Regulator),
        Err(ParseError::Empty(Role::Regulator))
    );
    assert_eq!(
        parse_action("Thinking it over.\nANSWER: CT", Role::User),
        Ok(Action::Trust)
    );
    assert_eq!(
        parse_action("I will enforce.", Role::Regulator),
        Ok(Action::Comply)
    );
    assert_eq!(
        parse_action("I will not trust this.", Role::User),
        Ok(Action::NoTrust)
    );
}

#[test]
fn garbled_backend_yields_invalid_but_persisted_games() {
    let mut config = BackendConfig::scripted_random(3);
    config.p_garbled = 1.0;
    let reg = registry(config);
    let t = play(&spec_with(TrustMode::Conditional, 3, &[]), &reg, 1, 0);
    assert!(!t.valid);
    assert!(t.rounds.is_empty());
    assert_eq!(t.incomplete_round[0].replies.len(), 4);
    let text = to_jsonl_string(std::slice::from_ref(&t));
    assert_eq!(read_jsonl(text.as_bytes()).unwrap(), vec![t]);
}

#[test]
fn mixed_backends_rejected() {
    let reg = registry(BackendConfig::fixed("TCC"));
    let mut spec = spec_with(TrustMode::Unconditional, 1, &[]);
    spec.agents[2] = AgentSpec::new(Role::Regulator, "elsewhere");
    let run = GameRun::new("g", 0, 0);
    assert!(play_game(&spec, &PromptTemplate::default_template(), &reg, &run).is_err());
    let mut spec = spec_with(TrustMode::Unconditional, 1, &[]);
    spec.communicate = true;
    assert!(play_game(&spec, &PromptTemplate::default_template(), &reg, &run).is_err());
}

fn arb_traits() -> impl Strategy<Value = Vec<Personality>> {
    (
        prop::option::of(prop::sample::select(vec![
            Personality::RiskAverse,
            Personality::RiskTaking,
        ])),
        prop::option::of(prop::sample::select(vec![
            Personality::Aggressive,
            Personality::Cooperative,
        ])),
        prop::option::of(prop::sample::select(vec![
            Personality::Lenient,
            Personality::Strict,
        ])),
    )
        .prop_map(|(a, b, c)| [a, b, c].into_iter().flatten().collect())
}

fn arb_mode() -> impl Strategy<Value = TrustMode> {
    prop::sample::select(TrustMode::ALL.to_vec())
}

fn arb_params() -> impl Strategy<Value = GameParams> {
    (0u32..=8, 0u32..=8, 0u32..=12, -4i32..=4).prop_map(|(bfo, cr, bu, eps)| GameParams {
        b_fo: f64::from(bfo),
        c_r: f64::from(cr) * 0.5,
        b_u: f64::from(bu) * 0.5,
        epsilon: f64::from(eps) * 0.1,
        ..GameParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_foreign_personality_and_history_grows(
        traits in arb_traits(),
        mode in arb_mode(),
        params in arb_params(),
        rounds in 1u32..=10,
        seed in any::<u64>(),
        garble in prop::sample::select(vec![0.0, 0.3]),
    ) {
        let mut config = BackendConfig::scripted_random(seed);
        config.p_garbled = garble;
        let reg = registry(config);
        let mut spec = spec_with(mode, rounds, &traits);
        spec.params = params;
        let t = play(&spec, &reg, seed ^ 1, 0);
        let turns = t.rounds.iter().flat_map(|r| r.turns.iter().map(move |x| (r.round, x)))
            .chain(t.incomplete_round.iter().map(|x| (t.rounds.len() as u32 + 1, x)));
        for (round, turn) in turns {
            for p in Personality::ALL {
                let own = traits.contains(&p) && p.role() == turn.role;
                prop_assert_eq!(turn.prompt.contains(p.meaning()), own);
                prop_assert_eq!(turn.prompt.contains(&p.trait_text()), own);
                for reply in &turn.replies {
                    prop_assert!(!reply.contains(p.meaning()));
                }
            }
            prop_assert_eq!(count_history_lines(&turn.prompt), round as usize - 1);
        }
        for r in &t.rounds {
            prop_assert_eq!(r.payoffs, payoff(r.profile, &spec.params, spec.mode));
            for turn in &r.turns {
                let action = turn.action.unwrap();
                prop_assert!(action.is_valid_for(turn.role));
                prop_assert_eq!(r.profile.action(turn.role), action);
            }
        }
        if t.valid {
            prop_assert_eq!(t.rounds.len() as u32, rounds);
        }
    }

    #[test]
    fn query_order_does_not_matter(
        mode in arb_mode(),
        rounds in 1u32..=6,
        seed in any::<u64>(),
        order_idx in 0usize..6,
    ) {
        let orders = [
            [Role::User, Role::Developer, Role::Regulator],
            [Role::User, Role::Regulator, Role::Developer],
            [Role::Developer, Role::User, Role::Regulator],
            [Role::Developer, Role::Regulator, Role::User],
            [Role::Regulator, Role::User, Role::Developer],
            [Role::Regulator, Role::Developer, Role::User],
        ];
        let mut config = BackendConfig::scripted_random(seed);
        config.p_garbled = 0.2;
        let reg = registry(config);
        let spec = spec_with(mode, rounds, &[Personality::Lenient]);
        let run = GameRun::new("g", seed, 0);
        let template = PromptTemplate::default_template();
        let base = play_game_ordered(&spec, &template, &reg, &run, orders[0]).unwrap();
        let permuted = play_game_ordered(&spec, &template, &reg, &run, orders[order_idx]).unwrap();
        prop_assert_eq!(to_jsonl_string(&[base]), to_jsonl_string(&[permuted]));
    }

    #[test]
    fn transcripts_round_trip(seed in any::<u64>(), rounds in 1u32..=4, garble in prop::sample::select(vec![0.0, 0.5])) {
        let mut config = BackendConfig::scripted_random(seed);
        config.p_garbled = garble;
        let reg = registry(config);
        let games: Vec<_> = (0..3).map(|k| play(&spec_with(TrustMode::Conditional, rounds, &[]), &reg, seed.wrapping_add(k), k as u32)).collect();
        let text = to_jsonl_string(&games);
        let back = read_jsonl(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &games);
        prop_assert_eq!(to_jsonl_string(&back), text);
    }
}
