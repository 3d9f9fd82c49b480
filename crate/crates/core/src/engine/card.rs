use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;

/// Identifier of a card in the pool. The Coin uses `pool.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CardId(pub u16);

impl CardId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hero {
    Mage,
    Hunter,
    Warrior,
}

impl Hero {
    pub const ALL: [Hero; 3] = [Hero::Mage, Hero::Hunter, Hero::Warrior];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Hero> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Hero::Mage => "mage",
            Hero::Hunter => "hunter",
            Hero::Warrior => "warrior",
        }
    }
}

impl fmt::Display for Hero {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Hero {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mage" => Ok(Hero::Mage),
            "hunter" => Ok(Hero::Hunter),
            "warrior" => Ok(Hero::Warrior),
            other => Err(EngineError::InvalidHero(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeroRestriction {
    Common,
    Only(Hero),
}

impl HeroRestriction {
    pub fn allows(self, hero: Hero) -> bool {
        match self {
            HeroRestriction::Common => true,
            HeroRestriction::Only(h) => h == hero,
        }
    }

    fn token(self) -> &'static str {
        match self {
            HeroRestriction::Common => "common",
            HeroRestriction::Only(h) => h.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardKind {
    Minion,
    Spell,
    Weapon,
}

impl CardKind {
    fn token(self) -> &'static str {
        match self {
            CardKind::Minion => "minion",
            CardKind::Spell => "spell",
            CardKind::Weapon => "weapon",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Keywords {
    pub taunt: bool,
    pub charge: bool,
}

impl Keywords {
    fn token(self) -> &'static str {
        match (self.taunt, self.charge) {
            (false, false) => "-",
            (true, false) => "taunt",
            (false, true) => "charge",
            (true, true) => "taunt,charge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectVerb {
    None,
    Damage,
    AoeDamageEnemyMinions,
    Heal,
    Draw,
    Buff,
    GainArmor,
}

impl EffectVerb {
    fn token(self) -> &'static str {
        match self {
            EffectVerb::None => "none",
            EffectVerb::Damage => "damage",
            EffectVerb::AoeDamageEnemyMinions => "aoe_damage_enemy_minions",
            EffectVerb::Heal => "heal",
            EffectVerb::Draw => "draw",
            EffectVerb::Buff => "buff",
            EffectVerb::GainArmor => "gain_armor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    None,
    AnyCharacter,
    FriendlyMinion,
    EnemyHero,
}

impl TargetClass {
    fn token(self) -> &'static str {
        match self {
            TargetClass::None => "none",
            TargetClass::AnyCharacter => "any_character",
            TargetClass::FriendlyMinion => "friendly_minion",
            TargetClass::EnemyHero => "enemy_hero",
        }
    }

    /// Whether resolving this class needs an explicit second operation.
    pub fn needs_choice(self) -> bool {
        matches!(self, TargetClass::AnyCharacter | TargetClass::FriendlyMinion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EffectSpec {
    pub verb: EffectVerb,
    pub magnitude: u8,
    pub target: TargetClass,
}

impl EffectSpec {
    pub const NONE: EffectSpec = EffectSpec { verb: EffectVerb::None, magnitude: 0, target: TargetClass::None };

    fn validate(&self) -> Result<(), String> {
        use EffectVerb as V;
        use TargetClass as T;
        let m = self.magnitude;
        match (self.verb, self.target) {
            (V::None, T::None) => {
                if m != 0 {
                    return Err("verb none must have magnitude 0".into());
                }
            }
            (V::None, _) => return Err("verb none requires target none".into()),
            (V::Damage, T::AnyCharacter | T::EnemyHero) | (V::Heal, T::AnyCharacter | T::FriendlyMinion) => {
                if !(1..=6).contains(&m) {
                    return Err(format!("damage/heal magnitude {m} outside 1..=6"));
                }
            }
            (V::Draw, T::None) => {
                if !(1..=3).contains(&m) {
                    return Err(format!("draw magnitude {m} outside 1..=3"));
                }
            }
            (V::AoeDamageEnemyMinions | V::GainArmor, T::None) | (V::Buff, T::FriendlyMinion) => {
                if m == 0 {
                    return Err("magnitude must be positive".into());
                }
            }
            (verb, target) => return Err(format!("verb {} cannot use target class {}", verb.token(), target.token())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardSpec {
    pub id: CardId,
    pub name: String,
    pub restriction: HeroRestriction,
    pub kind: CardKind,
    pub cost: u8,
    pub attack: u8,
    /// Health for minions, durability for weapons, 0 for spells.
    pub health: u8,
    pub keywords: Keywords,
    pub effect: EffectSpec,
    pub max_copies: u8,
}

impl CardSpec {
    fn validate(&self) -> Result<(), String> {
        if self.cost > 10 {
            return Err(format!("cost {} > 10", self.cost));
        }
        if !(1..=2).contains(&self.max_copies) {
            return Err(format!("max_copies {} not in 1..=2", self.max_copies));
        }
        match self.kind {
            CardKind::Minion => {
                if self.health < 1 {
                    return Err("minion health must be >= 1".into());
                }
            }
            CardKind::Weapon => {
                if self.health < 1 || self.attack < 1 {
                    return Err("weapon needs attack and durability >= 1".into());
                }
                if self.effect != EffectSpec::NONE || self.keywords != Keywords::default() {
                    return Err("weapons carry no effect or keywords".into());
                }
            }
            CardKind::Spell => {
                if self.attack != 0 || self.health != 0 {
                    return Err("spells have no attack/health".into());
                }
                if self.effect.verb == EffectVerb::None {
                    return Err("spell without an effect".into());
                }
                if self.keywords != Keywords::default() {
                    return Err("spells carry no keywords".into());
                }
            }
        }
        self.effect.validate()
    }

    fn canonical(&self) -> String {
        format!(
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            self.id,
            self.restriction.token(),
            self.kind.token(),
            self.cost,
            self.attack,
            self.health,
            self.keywords.token(),
            self.effect.verb.token(),
            self.effect.magnitude,
            self.effect.target.token(),
            self.max_copies,
            self.name
        )
    }
}

/// Truncated SHA-256 over the canonical pool rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolChecksum(pub u64);

impl fmt::Display for PoolChecksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PoolChecksum {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16)
            .map(PoolChecksum)
            .map_err(|_| EngineError::MalformedPool(format!("bad checksum '{s}'")))
    }
}

/// The shipped pool file.
pub const MINISTONE_V1: &str = include_str!("../../data/ministone-v1.pool");
pub const MINISTONE_V1_CHECKSUM: PoolChecksum = PoolChecksum(0xb553_050f_a3f9_d950);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardPool {
    name: String,
    cards: Vec<CardSpec>,
    checksum: PoolChecksum,
}

impl CardPool {
    /// Build a pool from records, validating every card.
    pub fn new(name: impl Into<String>, cards: Vec<CardSpec>) -> Result<Self, EngineError> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(EngineError::MalformedPool(format!("bad pool name '{name}'")));
        }
        if cards.is_empty() {
            return Err(EngineError::MalformedPool("empty pool".into()));
        }
        for (i, card) in cards.iter().enumerate() {
            if card.id.index() != i {
                return Err(EngineError::MalformedPool(format!(
                    "card ids must be dense and ordered; found {} at position {i}",
                    card.id
                )));
            }
            card.validate().map_err(|e| EngineError::MalformedPool(format!("card {}: {e}", card.id)))?;
        }
        for hero in Hero::ALL {
            let copies: u32 = cards.iter().filter(|c| c.restriction.allows(hero)).map(|c| c.max_copies as u32).sum();
            if copies < super::DECK_SIZE as u32 {
                return Err(EngineError::MalformedPool(format!("{hero} cannot fill a {}-card deck", super::DECK_SIZE)));
            }
        }
        let checksum = Self::compute_checksum(&name, &cards);
        Ok(CardPool { name, cards, checksum })
    }

    /// The shipped `ministone-v1` pool.
    pub fn ministone_v1() -> Self {
        Self::parse(MINISTONE_V1).expect("embedded pool is valid")
    }

    pub fn compute_checksum(name: &str, cards: &[CardSpec]) -> PoolChecksum {
        let mut hasher = Sha256::new();
        hasher.update(name.as_bytes());
        for card in cards {
            hasher.update(b"\n");
            hasher.update(card.canonical().as_bytes());
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        PoolChecksum(u64::from_be_bytes(head))
    }

    /// Parse the structured-text pool format and verify its header checksum.
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let (pool, declared) = Self::parse_unchecked(text)?;
        if declared != pool.checksum {
            return Err(EngineError::ChecksumMismatch { expected: declared, found: pool.checksum });
        }
        Ok(pool)
    }

    /// Parse without comparing the declared checksum; returns the declared one.
    pub fn parse_unchecked(text: &str) -> Result<(Self, PoolChecksum), EngineError> {
        let bad = |line: usize, msg: &str| EngineError::MalformedPool(format!("line {line}: {msg}"));
        let mut name = None;
        let mut declared = None;
        let mut cards = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("pool ") {
                name = Some(rest.trim().to_string());
                continue;
            }
            if let Some(rest) = line.strip_prefix("checksum ") {
                declared = Some(rest.trim().parse::<PoolChecksum>()?);
                continue;
            }
            let fields: Vec<&str> = line.splitn(12, ' ').collect();
            if fields.len() != 12 {
                return Err(bad(lineno, "expected 12 fields"));
            }
            let num = |i: usize| -> Result<u8, EngineError> {
                fields[i].parse::<u8>().map_err(|_| bad(lineno, &format!("bad number '{}'", fields[i])))
            };
            let id: u16 = fields[0].parse().map_err(|_| bad(lineno, "bad id"))?;
            let restriction = match fields[1] {
                "common" => HeroRestriction::Common,
                h => HeroRestriction::Only(h.parse().map_err(|_| bad(lineno, "bad class"))?),
            };
            let kind = match fields[2] {
                "minion" => CardKind::Minion,
                "spell" => CardKind::Spell,
                "weapon" => CardKind::Weapon,
                _ => return Err(bad(lineno, "bad kind")),
            };
            let mut keywords = Keywords::default();
            if fields[6] != "-" {
                for kw in fields[6].split(',') {
                    match kw {
                        "taunt" => keywords.taunt = true,
                        "charge" => keywords.charge = true,
                        _ => return Err(bad(lineno, &format!("unknown keyword '{kw}'"))),
                    }
                }
            }
            let verb = match fields[7] {
                "none" => EffectVerb::None,
                "damage" => EffectVerb::Damage,
                "aoe_damage_enemy_minions" => EffectVerb::AoeDamageEnemyMinions,
                "heal" => EffectVerb::Heal,
                "draw" => EffectVerb::Draw,
                "buff" => EffectVerb::Buff,
                "gain_armor" => EffectVerb::GainArmor,
                _ => return Err(bad(lineno, "bad verb")),
            };
            let target = match fields[9] {
                "none" => TargetClass::None,
                "any_character" => TargetClass::AnyCharacter,
                "friendly_minion" => TargetClass::FriendlyMinion,
                "enemy_hero" => TargetClass::EnemyHero,
                _ => return Err(bad(lineno, "bad target class")),
            };
            cards.push(CardSpec {
                id: CardId(id),
                name: fields[11].trim().to_string(),
                restriction,
                kind,
                cost: num(3)?,
                attack: num(4)?,
                health: num(5)?,
                keywords,
                effect: EffectSpec { verb, magnitude: num(8)?, target },
                max_copies: num(10)?,
            });
        }
        let name = name.ok_or_else(|| EngineError::MalformedPool("missing 'pool' header".into()))?;
        let declared = declared.ok_or_else(|| EngineError::MalformedPool("missing 'checksum' header".into()))?;
        Ok((Self::new(name, cards)?, declared))
    }

    /// Render the pool in its file format, with the correct checksum header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# Columns: id class kind cost attack health keywords verb magnitude target copies name\n");
        out.push_str(&format!("pool {}\nchecksum {}\n", self.name, self.checksum));
        for card in &self.cards {
            out.push_str(&card.canonical());
            out.push('\n');
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn checksum(&self) -> PoolChecksum {
        self.checksum
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn cards(&self) -> &[CardSpec] {
        &self.cards
    }

    pub fn card(&self, id: CardId) -> Option<&CardSpec> {
        self.cards.get(id.index())
    }

    pub fn coin(&self) -> CardId {
        CardId(self.cards.len() as u16)
    }

    pub fn is_coin(&self, id: CardId) -> bool {
        id == self.coin()
    }

    /// Cards a hero may draft, in id order.
    pub fn eligible(&self, hero: Hero) -> impl Iterator<Item = &CardSpec> + '_ {
        self.cards.iter().filter(move |c| c.restriction.allows(hero))
    }

    pub fn card_name(&self, id: CardId) -> &str {
        if self.is_coin(id) {
            "The Coin"
        } else {
            self.card(id).map(|c| c.name.as_str()).unwrap_or("?")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_pool_shape() {
        let pool = CardPool::ministone_v1();
        assert_eq!(pool.name(), "ministone-v1");
        assert_eq!(pool.len(), 72);
        let commons = pool.cards().iter().filter(|c| c.restriction == HeroRestriction::Common).count();
        assert_eq!(commons, 48);
        for hero in Hero::ALL {
            assert_eq!(pool.eligible(hero).count(), 56);
        }
    }

    #[test]
    fn shipped_pool_checksum_is_pinned() {
        let pool = CardPool::ministone_v1();
        assert_eq!(pool.checksum(), MINISTONE_V1_CHECKSUM);
    }

    #[test]
    fn text_round_trip() {
        let pool = CardPool::ministone_v1();
        let again = CardPool::parse(&pool.to_text()).unwrap();
        assert_eq!(pool, again);
    }

    #[test]
    fn tampered_pool_is_rejected() {
        let tampered = MINISTONE_V1.replace("4 common spell 1 0 0 - damage 2", "4 common spell 1 0 0 - damage 3");
        assert!(matches!(CardPool::parse(&tampered), Err(EngineError::ChecksumMismatch { .. })));
    }

    #[test]
    fn invalid_cards_are_rejected() {
        let pool = CardPool::ministone_v1();
        let mut cards = pool.cards().to_vec();
        cards[0].cost = 11;
        assert!(CardPool::new("x", cards).is_err());

        let mut cards = pool.cards().to_vec();
        cards[4].effect.magnitude = 7;
        assert!(CardPool::new("x", cards).is_err());

        let mut cards = pool.cards().to_vec();
        cards[12].effect.magnitude = 4; // draw 4
        assert!(CardPool::new("x", cards).is_err());

        let mut cards = pool.cards().to_vec();
        cards[0].effect = EffectSpec { verb: EffectVerb::None, magnitude: 0, target: TargetClass::AnyCharacter };
        assert!(CardPool::new("x", cards).is_err());

        let mut cards = pool.cards().to_vec();
        cards[4].attack = 2; // spell with attack
        assert!(CardPool::new("x", cards).is_err());
    }
}
