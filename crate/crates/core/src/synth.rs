//! Deterministic synthetic dialogue corpora for hermetic runs.
//!
//! [`synthetic_corpus`] writes Ubuntu-flavoured troubleshooting dialogues.
//! Each dialogue draws a small topic vocabulary; context turns mix topic
//! words with common function words, and the final turn reuses topic words
//! already seen in the context, so the true response overlaps lexically
//! with its context while distractors (other dialogues' final turns)
//! mostly do not.
//!
//! [`planted_truth_corpus`] is a stricter variant where the final turn
//! repeats the single-word opening turn verbatim.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dialogue;

const CONTENT: &[&str] = &[
    "apt-get", "kernel", "grub", "driver", "nvidia", "wifi", "ethernet", "mount", "partition", "fstab",
    "sudo", "password", "login", "xorg", "monitor", "resolution", "sound", "pulseaudio", "alsa", "bluetooth",
    "printer", "cups", "firewall", "ufw", "ssh", "keygen", "port", "dns", "resolv", "proxy",
    "repository", "ppa", "upgrade", "dist-upgrade", "dpkg", "broken", "dependency", "library", "compile", "gcc",
    "make", "cmake", "python", "pip", "virtualenv", "java", "jdk", "eclipse", "vim", "emacs",
    "terminal", "bash", "zsh", "alias", "cron", "systemd", "service", "daemon", "journal", "syslog",
    "swap", "memory", "cpu", "temperature", "fan", "battery", "suspend", "hibernate", "lid", "brightness",
    "usb", "stick", "iso", "bootable", "dual-boot", "windows", "ntfs", "ext4", "fsck", "disk",
    "raid", "lvm", "encrypt", "luks", "backup", "rsync", "tar", "gzip", "permission", "chmod",
    "chown", "group", "user", "home", "desktop", "gnome", "kde", "unity", "panel", "wallpaper",
    "firefox", "chrome", "flash", "codec", "vlc", "mp3", "video", "webcam", "skype", "samba",
];

const FUNCTION: &[&str] = &[
    "i", "the", "to", "is", "it", "how", "do", "you", "can", "my", "a", "with", "try", "not", "on", "what",
];

fn turn(rng: &mut ChaCha8Rng, topic: &[&str], n_topic: usize, n_function: usize) -> String {
    let mut words: Vec<&str> = topic.choose_multiple(rng, n_topic).copied().collect();
    words.extend(FUNCTION.choose_multiple(rng, n_function).copied());
    words.shuffle(rng);
    words.join(" ")
}

/// `n` dialogues of 3..=8 turns with planted context/response overlap.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let topic: Vec<&str> = CONTENT.choose_multiple(&mut rng, 6).copied().collect();
            let n_turns = rng.gen_range(3..=8);
            let mut turns: Vec<String> = (0..n_turns - 1)
                .map(|_| {
                    let t = rng.gen_range(2..=3);
                    let f = rng.gen_range(1..=3);
                    turn(&mut rng, &topic, t, f)
                })
                .collect();
            let seen: Vec<&str> = topic
                .iter()
                .copied()
                .filter(|w| turns.iter().any(|t| t.split(' ').any(|x| x == *w)))
                .collect();
            let t = rng.gen_range(2..=3).min(seen.len());
            turns.push(turn(&mut rng, &seen, t, 1));
            Dialogue { id: id as u32, turns }
        })
        .collect()
}

/// `n` dialogues whose final turn repeats the one-word opening turn.
pub fn planted_truth_corpus(n: usize, seed: u64) -> Vec<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let key = format!("{}{id}", CONTENT[id % CONTENT.len()]);
            let topic: Vec<&str> = CONTENT.choose_multiple(&mut rng, 6).copied().collect();
            let n_turns = rng.gen_range(3..=6);
            let mut turns = vec![key.clone()];
            for _ in 1..n_turns - 1 {
                turns.push(turn(&mut rng, &topic, 2, 2));
            }
            turns.push(key);
            Dialogue { id: id as u32, turns }
        })
        .collect()
}
