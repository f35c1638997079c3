//! Static table of the 51 source languages of a TED-based X→English setup:
//! bilingual datastore size, language family, grouping and bridge flag.
//!
//! Sizes are entry counts as published (rounded to the nearest thousand or
//! hundred thousand).

use crate::lang::LanguageTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureLanguage {
    pub code: &'static str,
    pub size: u64,
    pub family: &'static str,
    pub grouping: &'static str,
    pub bridge: bool,
}

impl FixtureLanguage {
    pub fn tag(&self) -> LanguageTag {
        LanguageTag::new(self.code)
            .expect("fixture codes are valid")
            .with_grouping(self.grouping)
            .with_bridge(self.bridge)
    }
}

const fn row(
    code: &'static str,
    size: u64,
    family: &'static str,
    grouping: &'static str,
    bridge: bool,
) -> FixtureLanguage {
    FixtureLanguage { code, size, family, grouping, bridge }
}

pub const LANGUAGES: [FixtureLanguage; 51] = [
    row("kk", 84_000, "Turkic", "Turkic", false),
    row("be", 116_000, "Slavic", "Slavic", false),
    row("bn", 127_000, "Indo-Aryan", "Indo", true),
    row("ms", 132_000, "Malayo-Polyn.", "Malayo", false),
    row("bs", 146_000, "Slavic", "Slavic", false),
    row("az", 153_000, "Turkic", "Turkic", false),
    row("ta", 156_000, "Dravidian", "Indo", true),
    row("ur", 158_000, "Indo-Aryan", "Indo", false),
    row("mn", 181_000, "Mongolic", "Mongolic", false),
    row("mr", 241_000, "Indo-Aryan", "Indo", false),
    row("gl", 254_000, "Romance", "Romance", false),
    row("et", 280_000, "Uralic", "Uralic", false),
    row("ka", 332_000, "Kartvelian", "Greek", false),
    row("no", 411_000, "Germanic", "Germanic", false),
    row("hi", 481_000, "Indo-Aryan", "Indo", true),
    row("sl", 520_000, "Slavic", "Slavic", false),
    row("hy", 544_000, "Armenian", "Greek", false),
    row("my", 558_000, "Sino-Tibetan", "Mongolic", false),
    row("fi", 623_000, "Uralic", "Uralic", true),
    row("mk", 683_000, "Slavic", "Slavic", false),
    row("lt", 1_100_000, "Baltic", "Uralic", true),
    row("sq", 1_200_000, "Albanian", "Greek", false),
    row("da", 1_200_000, "Germanic", "Germanic", false),
    row("pt", 1_200_000, "Romance", "Romance", true),
    row("sv", 1_400_000, "Germanic", "Germanic", true),
    row("sk", 1_600_000, "Slavic", "Slavic", false),
    row("id", 2_300_000, "Malayo-Polyn.", "Malayo", true),
    row("th", 2_600_000, "Kra-Dai", "Mongolic", false),
    row("cs", 2_700_000, "Slavic", "Slavic", false),
    row("uk", 2_900_000, "Slavic", "Slavic", false),
    row("hr", 3_300_000, "Slavic", "Slavic", false),
    row("el", 3_500_000, "Hellenic", "Greek", true),
    row("sr", 3_600_000, "Slavic", "Slavic", false),
    row("hu", 3_900_000, "Uralic", "Uralic", true),
    row("fa", 4_000_000, "Iranian", "Arabic", true),
    row("de", 4_500_000, "Germanic", "Germanic", true),
    row("vi", 4_600_000, "Vietic", "Chinese", true),
    row("bg", 4_700_000, "Slavic", "Slavic", false),
    row("pl", 4_700_000, "Slavic", "Slavic", true),
    row("ro", 4_800_000, "Romance", "Romance", false),
    row("nl", 4_900_000, "Germanic", "Germanic", true),
    row("tr", 4_900_000, "Turkic", "Turkic", true),
    row("fr", 5_100_000, "Romance", "Romance", true),
    row("es", 5_200_000, "Romance", "Romance", true),
    row("zh", 5_400_000, "Chinese", "Chinese", true),
    row("ja", 5_500_000, "Japonic", "Chinese", true),
    row("it", 5_500_000, "Romance", "Romance", false),
    row("ko", 5_500_000, "Koreanic", "Chinese", true),
    row("ru", 5_600_000, "Slavic", "Slavic", true),
    row("he", 5_700_000, "Semitic", "Arabic", true),
    row("ar", 5_800_000, "Arabic", "Arabic", true),
];

pub fn find(code: &str) -> Option<&'static FixtureLanguage> {
    LANGUAGES.iter().find(|l| l.code == code)
}

/// Languages in `grouping`, in table order.
pub fn grouping(name: &str) -> Vec<&'static FixtureLanguage> {
    LANGUAGES.iter().filter(|l| l.grouping == name).collect()
}

pub fn bridges() -> Vec<&'static FixtureLanguage> {
    LANGUAGES.iter().filter(|l| l.bridge).collect()
}

pub fn total_size() -> u64 {
    LANGUAGES.iter().map(|l| l.size).sum()
}
