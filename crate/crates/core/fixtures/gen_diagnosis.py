"""Writes diagnosis_source.jsonl: synthetic intake cases in the raw format.

Cases are reconstructions: statements are drawn from per-condition pools,
not taken from any patient record. Besides the 55 usable cases (5 for each
of 11 conditions) the file holds cases the loader must drop: too few or too
many statements, and differentials with fewer than three alternatives.
"""
import json
import random

POOLS = {
    "Acute laryngitis": [
        "The patient has noticed that the tone of their voice has become deeper, softer, or hoarse.",
        "The patient has had a cold in the last 2 weeks.",
        "The patient has pain somewhere, related to their reason for consulting.",
        "The patient feels pain in the trachea.",
        "The patient's pain is sensitive.",
        "The intensity of the patient's pain is 3 (on a scale of 0 to 10).",
        "The patient's pain does not radiate to another location.",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient smokes cigarettes.",
        "The patient has a cough.",
        "The patient has been straining their voice recently.",
        "The patient lives with 4 or more people.",
        "The patient's pain appeared at a speed of 2 (on a scale of 0 to 10).",
        "The patient feels pain under the jaw.",
        "The patient has a sore throat.",
        "The patient has not travelled out of the country in the last 4 weeks.",
    ],
    "Viral pharyngitis": [
        "The patient has a sore throat.",
        "The patient has pain when swallowing.",
        "The patient feels pain in the tonsils.",
        "The patient has a runny nose.",
        "The patient has a cough.",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The intensity of the patient's pain is 5 (on a scale of 0 to 10).",
        "The patient's pain is sensitive.",
        "The patient attends or works in a daycare.",
        "The patient lives with 4 or more people.",
        "The patient has been in contact with a person with similar symptoms in the past 2 weeks.",
        "The patient has diffuse muscle pain.",
        "The patient's pain does not radiate to another location.",
        "The patient has nasal congestion.",
        "The patient has not travelled out of the country in the last 4 weeks.",
        "The patient's pain appeared at a speed of 4 (on a scale of 0 to 10).",
    ],
    "Pneumonia": [
        "The patient has a cough that produces colored or more abundant sputum than usual.",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient is experiencing shortness of breath or difficulty breathing.",
        "The patient has chills or shivers.",
        "The patient has pain somewhere, related to their reason for consulting.",
        "The patient feels pain in the side of the chest.",
        "The patient's pain is a knife-like stabbing pain.",
        "The patient's pain increases when breathing in deeply.",
        "The intensity of the patient's pain is 6 (on a scale of 0 to 10).",
        "The patient is significantly more tired than usual.",
        "The patient has a loss of appetite.",
        "The patient smokes cigarettes.",
        "The patient has chronic obstructive pulmonary disease.",
        "The patient's pain does not radiate to another location.",
        "The patient has had a cold in the last 2 weeks.",
        "The patient lives alone.",
    ],
    "Acute otitis media": [
        "The patient feels pain in the left ear.",
        "The patient's pain is sharp.",
        "The intensity of the patient's pain is 7 (on a scale of 0 to 10).",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient has had a cold in the last 2 weeks.",
        "The patient has a runny nose.",
        "The patient has nasal congestion.",
        "The patient has noticed decreased hearing in one ear.",
        "The patient attends or works in a daycare.",
        "The patient's pain does not radiate to another location.",
        "The patient's pain appeared at a speed of 6 (on a scale of 0 to 10).",
        "The patient has trouble sleeping because of the pain.",
        "The patient is exposed to secondhand cigarette smoke at home.",
        "The patient has a cough.",
        "The patient feels pain behind the ear.",
        "The patient is irritable.",
    ],
    "Acute rhinosinusitis": [
        "The patient has nasal congestion.",
        "The patient has a runny nose with greenish or yellowish discharge.",
        "The patient feels pain in the forehead.",
        "The patient feels pain in the cheeks.",
        "The patient's pain is heavy.",
        "The intensity of the patient's pain is 4 (on a scale of 0 to 10).",
        "The patient's pain increases when bending forward.",
        "The patient has lost their sense of smell.",
        "The patient has had a cold in the last 2 weeks.",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient has a cough.",
        "The patient has bad breath.",
        "The patient's pain does not radiate to another location.",
        "The patient has a sore throat.",
        "The patient's pain appeared at a speed of 3 (on a scale of 0 to 10).",
        "The patient has allergies to pollen.",
    ],
    "Influenza": [
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient has diffuse muscle pain.",
        "The patient has chills or shivers.",
        "The patient is significantly more tired than usual.",
        "The patient has a cough.",
        "The patient has a headache.",
        "The patient has a sore throat.",
        "The patient has a runny nose.",
        "The patient has been in contact with a person with similar symptoms in the past 2 weeks.",
        "The patient has not received the flu vaccine this year.",
        "The intensity of the patient's pain is 5 (on a scale of 0 to 10).",
        "The patient's pain appeared at a speed of 7 (on a scale of 0 to 10).",
        "The patient has a loss of appetite.",
        "The patient lives with 4 or more people.",
        "The patient's pain is diffuse.",
        "The patient works in a hospital.",
    ],
    "Bronchitis": [
        "The patient has a cough.",
        "The patient has a cough that produces colored or more abundant sputum than usual.",
        "The patient has had a cold in the last 2 weeks.",
        "The patient feels pain in the upper chest.",
        "The patient's pain is burning.",
        "The intensity of the patient's pain is 3 (on a scale of 0 to 10).",
        "The patient's pain increases when coughing.",
        "The patient is wheezing when exhaling.",
        "The patient smokes cigarettes.",
        "The patient is experiencing mild shortness of breath.",
        "The patient has a sore throat.",
        "The patient has a fever, either felt or measured with a thermometer.",
        "The patient's pain does not radiate to another location.",
        "The patient is significantly more tired than usual.",
        "The patient has nasal congestion.",
        "The patient lives in a big city.",
    ],
    "GERD": [
        "The patient has a burning sensation that starts in the stomach and goes up into the throat.",
        "The patient's symptoms are worse when lying down after a meal.",
        "The patient has a bitter taste in their mouth.",
        "The patient feels pain in the upper abdomen.",
        "The patient's pain is burning.",
        "The intensity of the patient's pain is 4 (on a scale of 0 to 10).",
        "The patient's pain radiates to the chest.",
        "The patient drinks alcohol excessively.",
        "The patient is overweight.",
        "The patient has a chronic cough at night.",
        "The patient eats large meals late in the evening.",
        "The patient smokes cigarettes.",
        "The patient's pain appeared at a speed of 2 (on a scale of 0 to 10).",
        "The patient has a hoarse voice in the morning.",
        "The patient is pregnant.",
        "The patient takes anti-inflammatory medication regularly.",
    ],
    "Anemia": [
        "The patient is significantly more tired than usual.",
        "The patient feels lightheaded when standing up.",
        "The patient is experiencing shortness of breath with exertion.",
        "The patient has pale skin.",
        "The patient has heavy menstrual periods.",
        "The patient follows a vegetarian diet.",
        "The patient has cold hands and feet.",
        "The patient feels their heart beating fast.",
        "The patient has brittle nails.",
        "The patient has had a recent loss of appetite.",
        "The patient has a headache.",
        "The patient has a family history of anemia.",
        "The patient has chronic kidney disease.",
        "The patient has black stools.",
        "The patient has been feeling weak.",
        "The patient has difficulty concentrating.",
    ],
    "Panic attack": [
        "The patient feels their heart beating fast.",
        "The patient feels like they are suffocating.",
        "The patient has a fear of dying.",
        "The patient is sweating more than usual.",
        "The patient feels numbness or tingling in both hands.",
        "The patient feels lightheaded and dizzy.",
        "The patient has chest pain that started suddenly.",
        "The intensity of the patient's pain is 5 (on a scale of 0 to 10).",
        "The patient's pain appeared at a speed of 10 (on a scale of 0 to 10).",
        "The patient has had similar episodes in the past.",
        "The patient has been under significant stress recently.",
        "The patient feels detached from themselves.",
        "The patient has trembling hands.",
        "The patient's symptoms lasted less than 30 minutes.",
        "The patient has a diagnosed anxiety disorder.",
        "The patient drinks more than 3 cups of coffee a day.",
    ],
    "Pulmonary embolism": [
        "The patient is experiencing shortness of breath or difficulty breathing.",
        "The patient feels pain in the side of the chest.",
        "The patient's pain increases when breathing in deeply.",
        "The patient's pain is a knife-like stabbing pain.",
        "The intensity of the patient's pain is 7 (on a scale of 0 to 10).",
        "The patient's pain appeared at a speed of 9 (on a scale of 0 to 10).",
        "The patient has recently had surgery.",
        "The patient has been immobile for more than 3 consecutive days.",
        "The patient has swelling in one calf.",
        "The patient feels their heart beating fast.",
        "The patient has coughed up blood.",
        "The patient takes hormonal contraceptives.",
        "The patient has a history of deep vein thrombosis.",
        "The patient recently took a long flight.",
        "The patient has active cancer.",
        "The patient feels lightheaded.",
    ],
}

# Plausible alternatives for each condition, most likely first.
DIFFERENTIALS = {
    "Acute laryngitis": ["Viral pharyngitis", "Epiglottitis", "Bronchitis", "Chagas", "Influenza"],
    "Viral pharyngitis": ["Acute laryngitis", "Influenza", "Acute rhinosinusitis", "Epiglottitis", "Bronchitis"],
    "Pneumonia": ["Bronchitis", "Pulmonary embolism", "Influenza", "Tuberculosis", "Acute laryngitis"],
    "Acute otitis media": ["Acute rhinosinusitis", "Viral pharyngitis", "Influenza", "Acute laryngitis", "Bronchitis"],
    "Acute rhinosinusitis": ["Allergic sinusitis", "Viral pharyngitis", "Acute otitis media", "Influenza", "Bronchitis"],
    "Influenza": ["Viral pharyngitis", "Bronchitis", "Pneumonia", "Acute rhinosinusitis", "Acute laryngitis"],
    "Bronchitis": ["Pneumonia", "Influenza", "Acute laryngitis", "Bronchospasm", "GERD"],
    "GERD": ["Unstable angina", "Pulmonary embolism", "Panic attack", "Pancreatitis", "Bronchitis"],
    "Anemia": ["Panic attack", "Pulmonary embolism", "Unstable angina", "Hyperthyroidism", "Influenza"],
    "Panic attack": ["Unstable angina", "Pulmonary embolism", "GERD", "Anemia", "Hyperthyroidism"],
    "Pulmonary embolism": ["Pneumonia", "Unstable angina", "Panic attack", "Spontaneous pneumothorax", "Bronchitis"],
}

USABLE_PER_CONDITION = 5


def case(rng, cid, pathology, n_statements, n_negatives):
    statements = rng.sample(POOLS[pathology], n_statements)
    negatives = DIFFERENTIALS[pathology][:]
    rng.shuffle(negatives)
    negatives = sorted(negatives[:n_negatives], key=DIFFERENTIALS[pathology].index)
    differential = negatives[:]
    differential.insert(rng.randrange(0, 2), pathology)
    return {
        "id": cid,
        "age": rng.randrange(4, 80),
        "sex": rng.choice(["M", "F"]),
        "statements": statements,
        "differential": differential,
        "pathology": pathology,
    }


def main():
    rng = random.Random(20240611)
    rows = []
    n = 0
    for pathology in POOLS:
        for _ in range(USABLE_PER_CONDITION):
            n += 1
            rows.append(case(rng, f"DXR-{n:03d}", pathology, rng.randint(10, 15), rng.randint(3, 5)))
    extras = [(9, 4), (16, 4), (8, 3), (12, 2), (11, 1), (16, 5)]
    for i, (k, neg) in enumerate(extras):
        n += 1
        pathology = list(POOLS)[i % len(POOLS)]
        rows.append(case(rng, f"DXR-{n:03d}", pathology, k, neg))
    rng.shuffle(rows)
    with open("diagnosis_source.jsonl", "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
